//! Synthetic NSL-KDD-shaped files. Row counts per attack match the public
//! KDDTrain+ / KDDTest+ releases; feature values are random but depend on the
//! attack, so models have something to learn.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const TRAIN_COUNTS: [(&str, usize); 23] = [
    ("normal", 67343),
    ("neptune", 41214),
    ("smurf", 2646),
    ("back", 956),
    ("teardrop", 892),
    ("pod", 201),
    ("land", 18),
    ("satan", 3633),
    ("ipsweep", 3599),
    ("portsweep", 2931),
    ("nmap", 1493),
    ("warezclient", 890),
    ("guess_passwd", 53),
    ("warezmaster", 20),
    ("imap", 11),
    ("ftp_write", 8),
    ("multihop", 7),
    ("phf", 4),
    ("spy", 2),
    ("buffer_overflow", 30),
    ("rootkit", 10),
    ("loadmodule", 9),
    ("perl", 3),
];

pub const TEST_COUNTS: [(&str, usize); 38] = [
    ("normal", 9711),
    ("neptune", 4657),
    ("apache2", 737),
    ("processtable", 685),
    ("smurf", 665),
    ("back", 359),
    ("mailbomb", 293),
    ("pod", 41),
    ("teardrop", 12),
    ("land", 7),
    ("udpstorm", 2),
    ("mscan", 996),
    ("satan", 735),
    ("saint", 319),
    ("portsweep", 157),
    ("ipsweep", 141),
    ("nmap", 73),
    ("guess_passwd", 1231),
    ("warezmaster", 944),
    ("snmpguess", 331),
    ("snmpgetattack", 178),
    ("multihop", 18),
    ("named", 17),
    ("sendmail", 14),
    ("xlock", 9),
    ("xsnoop", 4),
    ("ftp_write", 3),
    ("phf", 2),
    ("worm", 2),
    ("imap", 1),
    ("httptunnel", 133),
    ("buffer_overflow", 20),
    ("ps", 15),
    ("rootkit", 13),
    ("xterm", 13),
    ("perl", 2),
    ("loadmodule", 2),
    ("sqlattack", 2),
];

const PROTOCOLS: [&str; 3] = ["tcp", "udp", "icmp"];
const FLAGS: [&str; 11] = ["SF", "S0", "REJ", "RSTR", "RSTO", "SH", "S1", "S2", "RSTOS0", "S3", "OTH"];
pub const SERVICES: usize = 70;

fn service(i: usize) -> String {
    const NAMED: [&str; 10] = ["http", "private", "domain_u", "smtp", "ftp_data", "eco_i", "other", "ecr_i", "telnet", "ftp"];
    NAMED.get(i).map_or_else(|| format!("svc{i:02}"), |s| s.to_string())
}

fn class_of(attack: &str) -> usize {
    match attack {
        "normal" => 0,
        "neptune" | "smurf" | "back" | "teardrop" | "pod" | "land" | "apache2" | "processtable" | "mailbomb" | "udpstorm" => 1,
        "satan" | "ipsweep" | "portsweep" | "nmap" | "mscan" | "saint" => 2,
        "buffer_overflow" | "rootkit" | "loadmodule" | "perl" | "httptunnel" | "ps" | "xterm" | "sqlattack" => 4,
        _ => 3,
    }
}

/// Writes one line per row. Features are drawn around a class-level centre
/// plus a smaller attack-level offset.
pub fn kdd_text(counts: &[(&str, usize)], seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut centre = ChaCha8Rng::seed_from_u64(7);
    let class_mu: Vec<Vec<f64>> = (0..5).map(|_| (0..38).map(|_| centre.gen_range(0.0..4.0)).collect()).collect();
    let mut out = String::new();
    let mut row = 0usize;
    for &(attack, n) in counts {
        let c = class_of(attack);
        let mut a = ChaCha8Rng::seed_from_u64(attack.bytes().fold(1469598103934665603u64, |h, b| (h ^ b as u64).wrapping_mul(1099511628211)));
        let offset: Vec<f64> = (0..38).map(|_| a.gen_range(-0.5..0.5)).collect();
        let base_service = a.gen_range(0..SERVICES);
        for _ in 0..n {
            let mut fields = Vec::with_capacity(43);
            let numeric: Vec<f64> = (0..38)
                .map(|j| (class_mu[c][j] + offset[j] + 0.8 * noise.sample(&mut rng)).max(0.0))
                .collect();
            // every vocab entry appears in the first rows of any file
            let svc = if row < SERVICES {
                row
            } else if rng.gen_bool(0.8) {
                (base_service + rng.gen_range(0..3)) % SERVICES
            } else {
                rng.gen_range(0..SERVICES)
            };
            let proto = if row < 3 { row } else if rng.gen_bool(0.9) { c % 3 } else { rng.gen_range(0..3) };
            let flag = if row < FLAGS.len() { row } else if rng.gen_bool(0.85) { c } else { rng.gen_range(0..FLAGS.len()) };
            fields.push(format!("{:.2}", numeric[0]));
            fields.push(PROTOCOLS[proto].to_string());
            fields.push(service(svc));
            fields.push(FLAGS[flag].to_string());
            fields.extend(numeric[1..].iter().map(|v| format!("{v:.2}")));
            fields.push(attack.to_string());
            fields.push(rng.gen_range(0..22).to_string());
            let _ = writeln!(out, "{}", fields.join(","));
            row += 1;
        }
    }
    out
}

pub fn write_kdd(path: &Path, counts: &[(&str, usize)], seed: u64) -> PathBuf {
    std::fs::write(path, kdd_text(counts, seed)).unwrap();
    path.to_path_buf()
}

/// Full-size train and test files in `dir`.
pub fn write_full_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    (write_kdd(&dir.join("KDDTrain+.txt"), &TRAIN_COUNTS, 1), write_kdd(&dir.join("KDDTest+.txt"), &TEST_COUNTS, 2))
}

/// Counts scaled by `frac`, keeping at least `min` rows of every attack.
pub fn scaled(counts: &[(&'static str, usize)], frac: f64, min: usize) -> Vec<(&'static str, usize)> {
    counts.iter().map(|&(a, n)| (a, ((n as f64 * frac).round() as usize).max(min.min(n)))).collect()
}

/// Real files when `NSLKDD_DIR` holds them.
pub fn real_nslkdd() -> Option<(PathBuf, PathBuf)> {
    let dir = PathBuf::from(std::env::var_os("NSLKDD_DIR")?);
    let (train, test) = (dir.join("KDDTrain+.txt"), dir.join("KDDTest+.txt"));
    (train.is_file() && test.is_file()).then_some((train, test))
}

use nids_core::balance::{balance_with_gan, make_balance_plan, train_scgan, GanConfig, GanTrainConfig};
use nids_core::classifier::{predict, train_cscacnn, ClassifierConfig, CostScheme, TrainConfig};
use nids_core::dataset::{fit_encoding, load_nslkdd, stratified_subsample, transform, SplitTag};
use nids_core::metrics::weighted_prf;

/// Settings of the desk-scale comparison between the full method and a plain CNN.
#[derive(Clone, Debug)]
pub struct DeskSetup {
    pub rows: usize,
    pub seeds: Vec<u64>,
    pub gan: GanConfig,
    pub gan_train: GanTrainConfig,
    pub classifier: ClassifierConfig,
    pub classifier_train: TrainConfig,
}

impl Default for DeskSetup {
    fn default() -> Self {
        DeskSetup {
            rows: 20_000,
            seeds: vec![0, 1, 2],
            gan: GanConfig::default(),
            gan_train: GanTrainConfig::default(),
            classifier: ClassifierConfig::default(),
            classifier_train: TrainConfig::default(),
        }
    }
}

/// Weighted F1 on the test file per seed: (GAN-balanced + CSL + CAM, raw without CSL/CAM).
pub fn desk_comparison(train: &Path, test: &Path, setup: &DeskSetup) -> (Vec<f64>, Vec<f64>) {
    let train_rs = load_nslkdd(train, SplitTag::Train).unwrap();
    let test_rs = load_nslkdd(test, SplitTag::Test).unwrap();
    let enc = fit_encoding(&train_rs).unwrap();
    let full = transform(&train_rs, &enc).unwrap().0;
    let test = transform(&test_rs, &enc).unwrap().0;
    let f1 = |m: &nids_core::classifier::ClassifierModel| {
        let p = predict(m, &test.values).unwrap();
        weighted_prf(&test.labels, &p.labels, test.num_classes()).unwrap().f1
    };
    let (mut ours, mut plain) = (Vec::new(), Vec::new());
    for &seed in &setup.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sub = full.select(&stratified_subsample(&full.labels, full.num_classes(), setup.rows, &mut rng));

        let gan = train_scgan(&sub, setup.gan.clone(), &GanTrainConfig { seed, ..setup.gan_train.clone() }).unwrap();
        let balanced = balance_with_gan(&sub, &gan.model, &make_balance_plan(&sub.class_stats()), seed ^ 0x5eed).unwrap();
        let cfg = TrainConfig { seed, cost_scheme: CostScheme::InverseFrequency, ..setup.classifier_train.clone() };
        let arch = ClassifierConfig { use_cam: true, ..setup.classifier.clone() };
        ours.push(f1(&train_cscacnn(&balanced, arch, &cfg).unwrap().model));

        let cfg = TrainConfig { seed, cost_scheme: CostScheme::Uniform, ..setup.classifier_train.clone() };
        let arch = ClassifierConfig { use_cam: false, ..setup.classifier.clone() };
        plain.push(f1(&train_cscacnn(&sub, arch, &cfg).unwrap().model));
    }
    (ours, plain)
}
