use evoir_cli::input::{self, BUNDLED_CLINICS, BUNDLED_CLINICS_SEED};

#[test]
fn bundled_clinics_match_the_synthetic_recipe() {
    let fresh = input::synthetic_clinics_csv(BUNDLED_CLINICS_SEED).unwrap();
    if std::env::var_os("EVOIR_REGENERATE").is_some() {
        std::fs::write(concat!(env!("CARGO_MANIFEST_DIR"), "/data/clinics.csv"), &fresh).unwrap();
        return;
    }
    assert_eq!(BUNDLED_CLINICS, fresh);
}

#[test]
fn bundled_longley_parses() {
    let data = input::parse_regression(input::BUNDLED_LONGLEY, true).unwrap();
    assert_eq!((data.n(), data.p()), (16, 7));
    assert_eq!(data, evoir_core::linreg::longley());
}
