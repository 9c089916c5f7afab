mod common;

use common::props;

#[test]
fn beam_splitter_preserves_norm_and_sector_weights() {
    props::beam_splitter_preserves_norm_and_sector_weights();
}

#[test]
fn displacement_and_phase_preserve_norm() {
    props::displacement_and_phase_preserve_norm();
}

#[test]
fn number_heralds_sum_to_one() {
    props::number_heralds_sum_to_one();
}

#[test]
fn hermite_recurrence() {
    props::hermite_recurrence();
}

#[test]
fn product_qfi_is_twice_arm_variance() {
    props::product_qfi_is_twice_arm_variance();
}

#[test]
fn qfi_ignores_common_phase() {
    props::qfi_ignores_common_phase();
}

#[test]
fn posterior_stays_normalized() {
    props::posterior_stays_normalized();
}

#[test]
fn genomes_and_mutants_are_valid_and_seeded() {
    props::genomes_and_mutants_are_valid_and_seeded();
}

#[test]
fn hill_climb_monotone_and_reproducible() {
    props::hill_climb_monotone_and_reproducible();
}

#[test]
fn loss_is_monotone() {
    props::loss_is_monotone();
}

#[test]
fn lossy_qfi_bounded_by_pure() {
    props::lossy_qfi_bounded_by_pure();
}

#[test]
fn mixed_qfi_matches_finite_differences() {
    props::mixed_qfi_matches_finite_differences();
}
