//! The binary trajectory format and split manifests.
//!
//! Simulates a short run, writes it to the `LGRT` container, reads it back,
//! and shows what survives the round trip: positions exactly (up to the
//! f32 storage quantization), velocities reconstructed from stored
//! positions by minimum-image finite differences. Then builds the
//! canonical train/valid/test split manifest and re-parses it.
//!
//! Run with `cargo run --example dataset_roundtrip`.

use lgr::dataset::{make_splits, read_trajectory, write_trajectory, CaseId, Split, SplitManifest};
use lgr::sph::{run_simulation, SimConfig};

fn main() {
    let dir = std::env::temp_dir().join("lgr_dataset_roundtrip");
    std::fs::create_dir_all(&dir).expect("temp dir");

    let mut config = SimConfig::taylor_green(216, 0);
    config.n_steps = 30;
    let run = run_simulation(&config).expect("simulation runs");
    let traj = &run.trajectory;

    let path = dir.join("tgv_example.lgrt");
    write_trajectory(traj, CaseId::TaylorGreen, 0.0, &path).expect("write");
    let bytes = std::fs::metadata(&path).unwrap().len();
    println!(
        "wrote {} frames x {} particles = {bytes} bytes ({} header + f32 positions)",
        traj.n_frames(),
        traj.n_particles(),
        lgr::dataset::HEADER_LEN
    );

    let (back, header) = read_trajectory(&path).expect("read");
    println!("header: case {:?}, dt_stored {}, extents {:?}", header.case, header.dt_stored, header.extents);

    // Positions survive up to f32 rounding; velocities are reconstructed.
    let mut worst_pos: f64 = 0.0;
    let mut worst_vel: f64 = 0.0;
    for (a, b) in traj.frames.iter().zip(&back.frames).skip(1) {
        for (p, q) in a.positions.iter().zip(&b.positions) {
            worst_pos = worst_pos.max(traj.domain.min_image(*p, *q).norm());
        }
        for (v, w) in a.velocities.iter().zip(&b.velocities) {
            worst_vel = worst_vel.max((*v - *w).norm());
        }
    }
    println!("worst position error {worst_pos:.3e} (f32 quantization)");
    println!("worst velocity error {worst_vel:.3e} (finite differences of stored positions)");

    // The canonical splits: 12 TGV trajectories -> 8 train / 2 valid / 2 test.
    let files: Vec<(String, usize)> =
        (0..12).map(|i| (format!("tgv_{i:02}.lgrt"), traj.n_frames())).collect();
    let manifest = make_splits(CaseId::TaylorGreen, &files).expect("12 files split cleanly");
    let manifest_path = dir.join("tgv_splits.txt");
    manifest.write(&manifest_path).expect("manifest write");
    let reread = SplitManifest::read(&manifest_path).expect("manifest read");
    assert_eq!(manifest, reread);
    for split in [Split::Train, Split::Valid, Split::Test] {
        println!(
            "{:>5}: {} file(s)",
            split.as_str(),
            reread.entries_for(split).count()
        );
    }

    // One long trajectory splits by frame ranges instead (the RPF layout).
    let long = vec![("rpf_00.lgrt".to_string(), 12_000)];
    let rpf = make_splits(CaseId::ReversePoiseuille, &long).expect("frame-range split");
    for e in &rpf.entries {
        println!("rpf {:>5}: frames [{}, {})", e.split.as_str(), e.start, e.end);
    }

    std::fs::remove_dir_all(&dir).ok();
}
