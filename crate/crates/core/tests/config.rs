use mrrd::config::{parse_pairs, RunConfig, DEFAULT_LEVELS, KEYS};
use mrrd::models::ModelKind;
use mrrd::splitting::{MatrixFormat, Mode};
use mrrd::{ConfigError, Dim};

fn pairs(text: &str) -> Vec<(String, String)> {
    parse_pairs(text).unwrap()
}

fn resolve(file: &str, flags: &str) -> Result<RunConfig, ConfigError> {
    RunConfig::resolve(&pairs(file), &pairs(flags), Some("3"))
}

#[test]
fn nagumo_defaults() {
    let c = resolve("model=nagumo", "").unwrap();
    assert_eq!(c.model, ModelKind::Nagumo);
    assert_eq!(c.dim, Dim::Two);
    assert_eq!(c.levels, DEFAULT_LEVELS);
    assert_eq!(c.dt, 1e-2);
    assert_eq!(c.t_end, 50.0 * c.dt);
    assert_eq!(c.mode, Mode::Multiresolution);
    assert_eq!(c.format, MatrixFormat::Csr);
    assert_eq!(c.threads, 3);
    assert_eq!(c.adapt_every, 1);
    assert!(!c.diffusion_control);
    assert!(c.out.is_none());
}

#[test]
fn bz_default_dt() {
    let c = resolve("model=bz", "").unwrap();
    assert_eq!(c.dt, 1e-3);
}

#[test]
fn levels_beyond_key_capacity_rejected() {
    let e = resolve("model=nagumo\ndim=3\nlevels=17", "").unwrap_err();
    assert!(matches!(&e, ConfigError::Invalid { key, .. } if key == "levels"), "{e}");
    assert!(e.to_string().contains("capacity"));
    resolve("model=nagumo\ndim=3\nlevels=16", "").unwrap();
    resolve("model=nagumo\ndim=2\nlevels=21", "").unwrap();
    assert!(resolve("model=nagumo\ndim=2\nlevels=22", "").is_err());
}

#[test]
fn missing_model() {
    assert!(matches!(resolve("dim=2", ""), Err(ConfigError::Missing(k)) if k == "model"));
}

#[test]
fn unknown_key() {
    assert!(matches!(resolve("model=nagumo\nlevls=7", ""), Err(ConfigError::UnknownKey(k)) if k == "levls"));
}

#[test]
fn stroke_rejected_at_parse_time() {
    assert!(matches!(resolve("model=stroke", ""), Err(ConfigError::Invalid { key, .. }) if key == "model"));
}

#[test]
fn cartesian_conflicts() {
    for extra in ["matrix_format=compact", "adapt_every=2"] {
        let e = resolve(&format!("model=bz\nmode=cartesian\n{extra}"), "").unwrap_err();
        assert!(matches!(e, ConfigError::Conflict(_)), "{extra}: {e}");
    }
    assert!(matches!(resolve("model=nagumo\nbz_pattern=target", ""), Err(ConfigError::Conflict(_))));
}

#[test]
fn cartesian_freezes_the_mesh() {
    let c = resolve("model=bz\nmode=cartesian", "").unwrap();
    assert_eq!(c.split().adapt_every, 0);
}

#[test]
fn syntax_errors_name_the_line() {
    assert!(matches!(parse_pairs("model=bz\n\nlevels 7"), Err(ConfigError::Syntax { line: 3 })));
    assert!(matches!(parse_pairs("=3"), Err(ConfigError::Syntax { line: 1 })));
}

#[test]
fn comments_dashes_and_case() {
    let c = resolve("# run\nmodel = BZ   # kinetics\nSnapshot-Every=5\n", "").unwrap();
    assert_eq!(c.model, ModelKind::Bz);
    assert_eq!(c.snapshot_every, 5);
}

#[test]
fn flags_override_file() {
    let c = resolve("model=nagumo\nlevels=6\ndt=0.02", "levels=7").unwrap();
    assert_eq!(c.levels, 7);
    assert_eq!(c.dt, 0.02);
}

#[test]
fn duplicate_in_one_source_rejected() {
    assert!(matches!(resolve("model=bz\nlevels=6\nlevels=7", ""), Err(ConfigError::Invalid { .. })));
}

#[test]
fn threads_from_env_and_flags() {
    let c = RunConfig::resolve(&pairs("model=bz"), &[], Some("5")).unwrap();
    assert_eq!(c.threads, 5);
    let c = RunConfig::resolve(&pairs("model=bz\nthreads=2"), &[], Some("5")).unwrap();
    assert_eq!(c.threads, 2);
    assert!(RunConfig::resolve(&pairs("model=bz"), &[], Some("0")).is_err());
    assert!(RunConfig::resolve(&pairs("model=bz"), &[], Some("many")).is_err());
}

#[test]
fn invalid_numbers() {
    for bad in ["dt=0", "dt=-1", "eps=abc", "tend=-1", "jmin=0", "rtol=0", "ic_noise=-1", "diffusion_control=yes"] {
        assert!(resolve(&format!("model=nagumo\n{bad}"), "").is_err(), "{bad}");
    }
}

#[test]
fn text_round_trip() {
    let c = resolve(
        "model=bz\ndim=2\nlevels=7\neps=0.005\ndt=0.002\ntend=0.1\nmatrix_format=compact\nout=/tmp/x\n\
         snapshot_every=3\nseed=9\nrtol=1e-7\nic_width=0.01\nic_center=0.4,0.5,0.5\nbz_pattern=target\nic_noise=0.001\n\
         diffusion_control=true",
        "",
    )
    .unwrap();
    let back = RunConfig::resolve(&pairs(&c.to_text()), &[], None).unwrap();
    assert_eq!(back, c);
}

#[test]
fn echo_omits_host_settings() {
    let c = resolve("model=bz\nout=/tmp/x\nthreads=4", "").unwrap();
    let keys: Vec<&str> = c.echo().iter().map(|(k, _)| *k).collect();
    assert!(!keys.contains(&"threads") && !keys.contains(&"out"));
    assert!(keys.iter().all(|k| KEYS.contains(k)));
}

#[test]
fn missing_file_reports_path() {
    let e = RunConfig::load(Some(std::path::Path::new("/nonexistent/run.cfg")), &[]).unwrap_err();
    assert!(matches!(e, ConfigError::Read { .. }));
}
