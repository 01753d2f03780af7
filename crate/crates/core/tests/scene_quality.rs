use beamrecall_testkit::criteria;

#[test]
fn doa_finds_both_talkers() {
    println!("{}", criteria::doa_accuracy().unwrap());
}

#[test]
fn mvdr_beats_the_center_mic() {
    println!("{}", criteria::beamforming_gain().unwrap());
}
