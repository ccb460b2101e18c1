//! Profile and branch files.

use std::sync::Arc;

use so5_vortex::continuation::trace_branch;
use so5_vortex::io::{read_profile, sidecar_path, write_branch, write_profile, ProfileMeta};
use so5_vortex::solver::{model_with_reference, solve};
use so5_vortex::*;

fn solved(kappa: Kappa, g: f64) -> (ModelParams, Profile, ProfileMeta) {
    let grid = Arc::new(RadialGrid::default_for_core(kappa.core_width()));
    let params = ModelParams::new(kappa, 1, g).unwrap();
    let p = solve(&params, &grid, &SolveOptions::with_seed(Seed::Perturbed(0.5))).unwrap();
    let (model, _) = model_with_reference(&params, &grid).unwrap();
    let meta = ProfileMeta {
        kappa,
        d: 1,
        g,
        r_max: grid.r_max(),
        n: grid.n(),
        grading: grid.grading(),
        energy_total: model.energy(&p).unwrap().total,
        pohozaev_rel_err: model.pohozaev(&p).rel_err,
        config: None,
    };
    (params, p, meta)
}

#[test]
fn profile_roundtrip_reproduces_the_energy() {
    let dir = tempfile::tempdir().unwrap();
    for (kappa, g) in [(Kappa::Infinite, 0.1), (Kappa::Finite(20.0), 0.2)] {
        let (params, p, meta) = solved(kappa, g);
        let path = dir.path().join(format!("p_{kappa}.csv"));
        write_profile(&path, &p, &meta).unwrap();
        assert!(sidecar_path(&path).exists());
        let (q, back) = read_profile(&path).unwrap();
        assert_eq!(back, meta);
        assert_eq!(q.f, p.f);
        assert_eq!(q.s, p.s);
        assert_eq!(q.m, p.m);
        let grid = q.grid.clone();
        let (model, _) = model_with_reference(&params, &grid).unwrap();
        let e = model.energy(&q).unwrap().total;
        assert!((e - meta.energy_total).abs() <= 1e-12 * meta.energy_total.abs().max(1.0));
    }
}

#[test]
fn profile_header_and_shape_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let (_, p, meta) = solved(Kappa::Infinite, 0.3);
    let path = dir.path().join("p.csv");
    write_profile(&path, &p, &meta).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("r,f,S,m\n"));
    assert_eq!(text.lines().count(), p.f.len() + 1);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, text.replacen("r,f,S,m", "r,f,s,m", 1)).unwrap();
    std::fs::copy(sidecar_path(&path), sidecar_path(&bad)).unwrap();
    assert!(matches!(read_profile(&bad), Err(Error::Format(_))));

    let short = dir.path().join("short.csv");
    let truncated: Vec<&str> = text.lines().take(100).collect();
    std::fs::write(&short, truncated.join("\n")).unwrap();
    std::fs::copy(sidecar_path(&path), sidecar_path(&short)).unwrap();
    assert!(read_profile(&short).is_err());

    assert!(matches!(
        read_profile(&dir.path().join("missing.csv")),
        Err(Error::Io(_))
    ));
}

#[test]
fn branch_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Arc::new(RadialGrid::new(2001, 40.0, Grading::Uniform).unwrap());
    let b = trace_branch(Kappa::Infinite, 1, &grid, 0.15, 6).unwrap();
    let path = dir.path().join("b.csv");
    write_branch(&path, &b).unwrap();
    let mut rd = csv::Reader::from_path(&path).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["g", "m0", "energy", "lambda_min", "pohozaev_rel", "newton_iters"]
    );
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), b.points.len());
    for (row, pt) in rows.iter().zip(&b.points) {
        assert_eq!(row[0].parse::<f64>().unwrap(), pt.g);
        assert_eq!(row[1].parse::<f64>().unwrap(), pt.m0);
        assert_eq!(row[5].parse::<usize>().unwrap(), pt.newton_iters);
    }
}
