use std::sync::OnceLock;

use wirepinn::io::{read_loss_history, read_surrogate, read_sweep, write_loss_history, write_surrogate, write_sweep};
use wirepinn::mesh::assemble_fv_coefficients;
use wirepinn::oracle::{ramp_sweep, NewtonOptions};
use wirepinn::pinn::LossRecord;
use wirepinn::surrogate::{fit, normalize_density, FitOptions};
use wirepinn::{build_device_mesh, DeviceConfig, Error, SemiconductorParams, SweepDataset, TensorMesh};

fn fixture() -> &'static (TensorMesh, SweepDataset) {
    static CELL: OnceLock<(TensorMesh, SweepDataset)> = OnceLock::new();
    CELL.get_or_init(|| {
        let mesh = build_device_mesh(&DeviceConfig::default()).unwrap();
        let coeffs = assemble_fv_coefficients(&mesh);
        let params = SemiconductorParams::default();
        let sweep = ramp_sweep(&mesh, &coeffs, &params, 0.0, 0.75, 0.0075, &NewtonOptions::default()).unwrap();
        (mesh, sweep)
    })
}

#[test]
fn full_sweep_round_trips_bit_for_bit() {
    let (mesh, sweep) = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.txt");
    write_sweep(sweep, mesh, &path).unwrap();

    let text = std::fs::read_to_string(&path).unwrap();
    let records = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(records, 101 * 2193);

    let back = read_sweep(&path, mesh).unwrap();
    assert_eq!(back.len(), sweep.len());
    assert_eq!(back.params, sweep.params);
    for (a, b) in back.snapshots.iter().zip(&sweep.snapshots) {
        assert_eq!(a.v_gate.to_bits(), b.v_gate.to_bits());
        assert!(a.phi.iter().zip(&b.phi).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.n.iter().zip(&b.n).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.converged, b.converged);
        assert_eq!(a.iterations, b.iterations);
    }

    let again = dir.path().join("again.txt");
    write_sweep(&back, mesh, &again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn truncated_sweep_reports_line() {
    let (mesh, sweep) = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.txt");
    write_sweep(sweep, mesh, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let keep = 5000;
    let cut: String = text.lines().take(keep).map(|l| format!("{l}\n")).collect();
    std::fs::write(&path, cut).unwrap();
    match read_sweep(&path, mesh) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, keep + 1),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn corrupted_record_reports_its_line() {
    let (mesh, sweep) = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.txt");
    write_sweep(sweep, mesh, &path).unwrap();
    let mut lines: Vec<String> = std::fs::read_to_string(&path).unwrap().lines().map(str::to_owned).collect();
    let target = 1234;
    lines[target - 1] = lines[target - 1].replace('e', "x");
    std::fs::write(&path, lines.join("\n")).unwrap();
    match read_sweep(&path, mesh) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, target),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn sweep_from_another_mesh_is_rejected() {
    let (mesh, sweep) = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.txt");
    write_sweep(sweep, mesh, &path).unwrap();
    let other = build_device_mesh(&DeviceConfig { nx: 65, ..DeviceConfig::default() }).unwrap();
    let err = read_sweep(&path, &other).unwrap_err();
    assert!(err.to_string().contains("fingerprint"), "{err}");
}

#[test]
fn surrogate_file_preserves_predictions() {
    let (mesh, sweep) = fixture();
    let lr = fit(&sweep.snapshots[..40], &FitOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lr.wpnn");
    write_surrogate(&lr, mesh.fingerprint(), &path).unwrap();
    let (back, fp) = read_surrogate(&path, Some(mesh.fingerprint())).unwrap();
    assert_eq!(fp, mesh.fingerprint());
    let input = normalize_density(&sweep.snapshots[90].n);
    let a = lr.predict_phi(&input).unwrap();
    let b = back.predict_phi(&input).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(read_surrogate(&path, Some(mesh.fingerprint() ^ 1)).is_err());
}

#[test]
fn loss_history_round_trips() {
    let history: Vec<LossRecord> = (0..10)
        .map(|k| LossRecord {
            step: k,
            lr: 1e-3 / (k + 1) as f64,
            boundary: 0.1f64.powi(k as i32),
            fd: 1.0 / 3.0 + k as f64,
            total: f64::MIN_POSITIVE * k as f64,
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.csv");
    write_loss_history(&history, &path).unwrap();
    let back = read_loss_history(&path).unwrap();
    assert_eq!(back.len(), history.len());
    for (a, b) in back.iter().zip(&history) {
        assert_eq!(a.step, b.step);
        assert_eq!(a.boundary.to_bits(), b.boundary.to_bits());
        assert_eq!(a.fd.to_bits(), b.fd.to_bits());
        assert_eq!(a.total.to_bits(), b.total.to_bits());
    }
}
