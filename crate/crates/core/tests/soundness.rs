// SPDX-License-Identifier: Apache-2.0

mod common;

#[test]
fn bound_never_exceeds_a_feasible_schedule() {
    let s = common::soundness_sweep(7, 600);
    assert!(s.checked >= 600);
    assert!(s.violations.is_empty(), "{} of {} violated:\n{}", s.violations.len(), s.checked, s.violations[..s.violations.len().min(5)].join("\n"));
}
