use eot_core::harness::{emit, load_config, run_experiment, ExperimentKind, ExperimentOutput, OutputFormat};
use eot_core::measures::{write_measure, DiscreteMeasure};

#[test]
fn config_file_drives_rate_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bias.txt");
    std::fs::write(&path, "# small run\nkind = bias_rate\nn = 50, 100\nreplicates = 4\ndims = 1\n").unwrap();
    let cfg = load_config(&path).unwrap();
    assert_eq!(cfg.kind, ExperimentKind::BiasRate);
    let out = run_experiment(&cfg).unwrap();
    let csv = dir.path().join("bias.csv");
    emit(&out, &csv, OutputFormat::CsvTable).unwrap();
    // header plus two curves of two points
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 5);
}

#[test]
fn measure_files_resolve_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = DiscreteMeasure::uniform(vec![0.0, 0.0, 1.0, 0.5, 0.2, 0.9], 2).unwrap();
    let q = DiscreteMeasure::uniform(vec![0.4, 0.1, 0.8, 0.8], 2).unwrap();
    write_measure(&p, dir.path().join("p.csv")).unwrap();
    write_measure(&q, dir.path().join("q.csv")).unwrap();
    let path = dir.path().join("cov.txt");
    std::fs::write(
        &path,
        "kind = coverage\nscenario = discrete\np_file = p.csv\nq_file = q.csv\nn = 20\nreplicates = 10\neps = 1, 2\n",
    )
    .unwrap();
    let out = run_experiment(&load_config(&path).unwrap()).unwrap();
    match out {
        ExperimentOutput::Coverage(c) => {
            assert_eq!(c.cells.len(), 2);
            assert_eq!(c.scenarios[0].p, p);
            assert!(c.cells.iter().all(|cell| cell.evaluated == 10));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = eot_core::harness::parse_config("kind = divergence_rate\nn = 10, 20\nreplicates = 2\ndims = 1\n", None)
        .unwrap();
    let out = run_experiment(&cfg).unwrap();
    let err = emit(&out, dir.path().join("missing/dir/x.csv"), OutputFormat::PlotData).unwrap_err();
    assert!(matches!(err, eot_core::Error::Io { .. }));
}
