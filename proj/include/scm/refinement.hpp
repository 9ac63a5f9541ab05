#pragma once

#include <span>
#include <vector>

namespace scm {

struct RefinementConfig {
  double epsilon = 0.5;

  void validate() const;

  bool operator==(const RefinementConfig &) const = default;
};

/// Smoothed target for an instance of the anchor class: 1-eps at position 0,
/// eps/(n-1) elsewhere. A singleton superclass yields the hard label {1}.
std::vector<double> refine_anchor_label(std::size_t n_fine, double epsilon);

/// Target for a non-anchor member at position `z`: 1-eps at `z`, eps at the
/// anchor position `d`, 0 elsewhere. Requires z != d.
std::vector<double> refine_member_label(std::size_t z, std::size_t d, std::size_t n_fine,
                                        double epsilon);

/// Refined target for the member at `position` of a superclass whose anchor
/// sits at position 0.
std::vector<double> refined_target(std::size_t position, std::size_t n_fine, double epsilon);

/// Soft-target cross-entropy of a fine-grained probability vector.
double refined_ce_loss(std::span<const double> probs, std::span<const double> refined);

} // namespace scm
