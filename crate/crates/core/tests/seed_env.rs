//! Kept in its own test binary: it mutates the process environment.

use std::path::Path;

use cellfree_energy::cli::scenario;
use cellfree_energy::config::SEED_ENV_VAR;

#[test]
fn env_seed_overrides_file_and_flag_overrides_env() {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/smoke.toml");
    assert_eq!(scenario(&p, None).unwrap().rng_seed, 11);
    std::env::set_var(SEED_ENV_VAR, "99");
    assert_eq!(scenario(&p, None).unwrap().rng_seed, 99);
    assert_eq!(scenario(&p, Some(3)).unwrap().rng_seed, 3);
    std::env::set_var(SEED_ENV_VAR, "not-a-number");
    assert!(scenario(&p, None).is_err());
    std::env::remove_var(SEED_ENV_VAR);
}
