#pragma once

namespace cssim {

// Every numeric threshold used by library code and tests.
struct Tolerances {
  double degenerate_norm = 1e-12;      // l2_normalize / cit_forward rejects norms <= this
  double unit_norm = 1e-6;             // |‖x̃‖ - 1| after normalization
  double prob_sum = 1e-9;              // |Σ probs - 1|
  double symmetry = 1e-12;             // |s_ij - s_ji|
  double factored_similarity = 1e-10;  // factored vs explicit A_c similarity, d <= 32
  double factored_regularizer = 1e-8;  // factored vs explicit ‖A_c - I‖_F²
  double ratio_sum = 1e-9;             // split ratios must sum to 1 within this
  double grad_rel_error = 1e-4;        // analytic vs central finite differences
  double fd_step = 1e-5;               // central difference step
  double rsm_symmetry = 1e-9;
};

inline constexpr Tolerances kTolerances{};

}  // namespace cssim
