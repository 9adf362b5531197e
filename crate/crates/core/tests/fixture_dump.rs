mod common;

#[test]
#[ignore = "writes full-size fixture files to $FIXTURE_OUT"]
fn dump_full_fixture() {
    let dir = std::path::PathBuf::from(std::env::var("FIXTURE_OUT").unwrap());
    common::write_full_fixture(&dir);
}
