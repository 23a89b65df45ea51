//! Regenerates the bundled synthetic dataset under `data/`: the efficiency
//! table, a 12-point frequency scan produced by the forward model at
//! Q = 4.85 e, U0 = 9 V with 1% multiplicative frequency noise (ChaCha8,
//! seed 1), and nothing else. Deterministic: rerunning reproduces the files
//! byte for byte.
//!
//!     cargo run -p needletrap-cli --example generate_fixture

use needletrap::constants::{angular_to_khz, charge_e_to_coulomb, um_to_m};
use needletrap::fitting::{log_spaced, FitMode, ScanModel};
use needletrap::trap::Efficiency;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::Write as _;
use std::path::Path;

fn eta_nodes() -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let ds_um: Vec<f64> = (0..34).map(|i| 40.0 + 25.0 * i as f64).collect();
    let etas: Vec<f64> = ds_um
        .iter()
        .map(|&d| 0.33 - 0.08 * (-(d - 50.0) / 150.0).exp())
        .collect();
    // DC efficiency screened by the ground sleeves at large separations
    let dcs: Vec<f64> = ds_um
        .iter()
        .zip(&etas)
        .map(|(&d, &e)| (e * 0.5 * (-(d - 50.0) / 80.0).exp()).clamp(1e-6, 1.0))
        .collect();
    (ds_um, etas, dcs)
}

fn main() {
    let data_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    std::fs::create_dir_all(&data_dir).expect("create data dir");

    let (ds_um, etas, dcs) = eta_nodes();
    let mut table = String::from("d_um,eta,eta_dc\n");
    for ((d, eta), dc) in ds_um.iter().zip(&etas).zip(&dcs) {
        writeln!(table, "{d},{eta},{dc}").unwrap();
    }
    std::fs::write(data_dir.join("eta_table.csv"), &table).expect("write eta table");

    let ds_m: Vec<f64> = ds_um.iter().map(|&d| um_to_m(d)).collect();
    let model = ScanModel {
        v0: 163.0,
        omega_rf: 2.0 * std::f64::consts::PI * 114e3,
        epsilon: 0.04,
        mass: 2.65e-19,
        eta: Efficiency::from_table(ds_m.clone(), etas).unwrap(),
        eta_dc: Some(Efficiency::from_table(ds_m, dcs).unwrap()),
    };
    let charge = charge_e_to_coulomb(4.85);
    let u0 = 9.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut scan = String::from("d_um,f_khz,sigma_f_khz\n");
    for d in log_spaced(50e-6, 800e-6, 12).unwrap() {
        // round the grid to 0.01 μm so the file carries tidy distances, and
        // evaluate the model at exactly the value written
        let d_um = (d * 1e8).round() / 100.0;
        let omega = model
            .frequency(um_to_m(d_um), charge, u0, FitMode::Series)
            .unwrap()
            .omega()
            .expect("reference point stable");
        let noise: f64 = StandardNormal.sample(&mut rng);
        let measured = omega * (1.0 + 0.01 * noise);
        writeln!(
            scan,
            "{},{},{}",
            d_um,
            angular_to_khz(measured),
            angular_to_khz(0.01 * omega)
        )
        .unwrap();
    }
    std::fs::write(data_dir.join("synthetic_scan.csv"), &scan).expect("write scan");
    println!("wrote {}", data_dir.display());
}
