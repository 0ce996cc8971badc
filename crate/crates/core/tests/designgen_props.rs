use std::collections::HashSet;

use proptest::prelude::*;
use trussgsm_core::designgen::{
    filter_worst, generate_dataset, latin_hypercube, percentile, split, DesignModel, SplitFractions,
};
use trussgsm_core::fea::ElementKind;
use trussgsm_core::formats::{read_dataset, write_dataset};
use trussgsm_core::model::{from_graph, to_graph, Material, DEFAULT_LOAD_NEWTONS};

const MODELS: [&str; 8] = ["dm5", "dm6", "dm7", "dm8", "dm9", "dm7_endloads", "tower", "bridge_small"];

#[test]
fn member_and_joint_counts() {
    let expect = [("dm7", 15, 27), ("tower", 13, 26), ("bridge", 202, 404), ("bridge_small", 50, 100)];
    for (name, joints, members) in expect {
        let m = DesignModel::by_name(name).unwrap();
        let t = m.generate(&m.scale_unit(&vec![0.5; m.param_count()]).unwrap()).unwrap();
        assert_eq!((t.joint_count(), t.members().len()), (joints, members), "{name}");
        assert_eq!((m.joint_count(), m.member_count()), (joints, members), "{name}");
    }
    assert_eq!(DesignModel::by_name("dm7").unwrap().param_count(), 5);
    assert_eq!(DesignModel::by_name("tower").unwrap().param_count(), 3);
    assert!(DesignModel::by_name("dm1").is_err());
    assert!(DesignModel::by_name("bridges").is_err());
}

#[test]
fn end_loads_only_on_outer_top_joints() {
    let m = DesignModel::by_name("dm7_endloads").unwrap();
    let t = m.generate(&m.scale_unit(&[0.5; 5]).unwrap()).unwrap();
    let loaded: Vec<usize> = (0..t.joint_count()).filter(|&j| t.joints()[j].load != [0.0, 0.0]).collect();
    assert_eq!(loaded, vec![0, 7]);
    assert!(loaded.iter().all(|&j| t.joints()[j].load == [0.0, -DEFAULT_LOAD_NEWTONS]));
}

#[test]
fn out_of_bounds_parameters_rejected() {
    let m = DesignModel::by_name("dm7").unwrap();
    let mut p = m.scale_unit(&[0.5; 5]).unwrap();
    p[0] = m.param_bounds()[0].1 + 1.0;
    assert!(m.generate(&p).is_err());
    assert!(m.scale_unit(&[0.5; 4]).is_err());
}

#[test]
fn generation_is_deterministic() {
    let m = DesignModel::by_name("dm6").unwrap();
    let (a, sa) = generate_dataset(&m, 20, 11, ElementKind::FrameBeam).unwrap();
    let (b, sb) = generate_dataset(&m, 20, 11, ElementKind::FrameBeam).unwrap();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    assert_eq!(sa.generated, 20);
    let (c, _) = generate_dataset(&m, 20, 12, ElementKind::FrameBeam).unwrap();
    assert_ne!(a.samples, c.samples);
    let (empty, _) = generate_dataset(&m, 0, 11, ElementKind::FrameBeam).unwrap();
    assert!(empty.is_empty());
}

#[test]
fn filter_drops_the_largest() {
    let m = DesignModel::by_name("dm7").unwrap();
    let (data, _) = generate_dataset(&m, 40, 2, ElementKind::FrameBeam).unwrap();
    let kept = filter_worst(&data, 0.1).unwrap();
    assert_eq!(kept.len(), 36);
    let cutoff = kept.max_displacements().into_iter().fold(0.0, f64::max);
    let dropped = data.max_displacements().into_iter().filter(|&d| d > cutoff).count();
    assert_eq!(dropped, 4);
    assert_eq!(filter_worst(&data, 0.0).unwrap().len(), 40);
    assert!(filter_worst(&data, 1.0).is_err());
}

#[test]
fn percentile_linear_interpolation() {
    assert_eq!(percentile(&[3.0, 1.0, 2.0], 0.0).unwrap(), 1.0);
    assert_eq!(percentile(&[3.0, 1.0, 2.0], 100.0).unwrap(), 3.0);
    assert!((percentile(&[1.0, 2.0, 3.0, 4.0], 90.0).unwrap() - 3.7).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lhs_is_stratified(n in 1usize..40, d in 1usize..7, seed in 0u64..1000) {
        let x = latin_hypercube(n, d, seed).unwrap();
        prop_assert_eq!(x.dim(), (n, d));
        for col in x.columns() {
            let mut cells: Vec<usize> = col.iter().map(|&v| (v * n as f64).floor() as usize).collect();
            cells.sort_unstable();
            prop_assert_eq!(cells, (0..n).collect::<Vec<_>>());
            prop_assert!(col.iter().all(|&v| (0.0..1.0).contains(&v)));
        }
    }

    #[test]
    fn encoding_invariants(model in 0usize..MODELS.len(), unit in proptest::collection::vec(0.0..1.0f64, 5)) {
        let m = DesignModel::by_name(MODELS[model]).unwrap();
        let t = m.generate(&m.scale_unit(&unit[..m.param_count()]).unwrap()).unwrap();
        let zero = ndarray::Array2::zeros((t.joint_count(), 2));
        let g = to_graph(&t, &zero, "x").unwrap();
        prop_assert_eq!(g.edges().len(), 2 * t.members().len() + t.joint_count());
        g.validate_topology().unwrap();
        let unique: HashSet<_> = g.edges().iter().collect();
        prop_assert_eq!(unique.len(), g.edges().len());
        for (j, joint) in t.joints().iter().enumerate() {
            let f = g.node_features().row(j);
            prop_assert_eq!([f[0], f[1]], joint.position);
            prop_assert_eq!(f[2] == 1.0, joint.support[0]);
            prop_assert_eq!(f[3] == 1.0, joint.support[1]);
            prop_assert_eq!(f[4] == 1.0, joint.load[0] != 0.0);
            prop_assert_eq!(f[5] == 1.0, joint.load[1] != 0.0);
        }
        let back = from_graph(&g, DEFAULT_LOAD_NEWTONS, Material::steel_section()).unwrap();
        prop_assert_eq!(back.joints(), t.joints());
        prop_assert_eq!(back.members(), t.members());
    }

    #[test]
    fn split_partitions(n in 0usize..120, seed in 0u64..1000) {
        let m = DesignModel::by_name("dm5").unwrap();
        let (data, _) = generate_dataset(&m, n, 1, ElementKind::FrameBeam).unwrap();
        let s = split(&data, SplitFractions::default(), seed);
        prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), n);
        prop_assert_eq!(s.train.len(), (0.68 * n as f64 + 1e-9).floor() as usize);
        let mut seen: HashSet<u64> = HashSet::new();
        for x in s.train.samples.iter().chain(&s.val.samples).chain(&s.test.samples) {
            seen.insert(x.design_hash());
        }
        let all: HashSet<u64> = data.samples.iter().map(|x| x.design_hash()).collect();
        prop_assert_eq!(seen, all);
    }
}

#[test]
fn dataset_round_trip_is_exact() {
    let m = DesignModel::by_name("tower").unwrap();
    let (data, _) = generate_dataset(&m, 15, 4, ElementKind::FrameBeam).unwrap();
    let mut buf = Vec::new();
    write_dataset(&mut buf, &data).unwrap();
    let back = read_dataset(buf.as_slice(), true).unwrap();
    assert_eq!(back, data);
    let mut again = Vec::new();
    write_dataset(&mut again, &back).unwrap();
    assert_eq!(buf, again);
}
