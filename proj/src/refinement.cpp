#include "scm/refinement.hpp"

#include "scm/error.hpp"
#include "scm/heads.hpp"

#include <cmath>
#include <string>

namespace scm {

namespace {

void check_epsilon(double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0))
    throw ConfigError("epsilon: " + std::to_string(epsilon) + " outside [0, 1)");
}

} // namespace

void RefinementConfig::validate() const { check_epsilon(epsilon); }

std::vector<double> refine_anchor_label(std::size_t n_fine, double epsilon) {
  check_epsilon(epsilon);
  if (n_fine == 0)
    throw ContractError("refine_anchor_label: empty superclass");
  if (n_fine == 1)
    return {1.0};
  std::vector<double> t(n_fine, epsilon / static_cast<double>(n_fine - 1));
  t[0] = 1.0 - epsilon;
  return t;
}

std::vector<double> refine_member_label(std::size_t z, std::size_t d, std::size_t n_fine,
                                        double epsilon) {
  check_epsilon(epsilon);
  if (z >= n_fine || d >= n_fine)
    throw ContractError("refine_member_label: position outside superclass of size " +
                        std::to_string(n_fine));
  if (z == d)
    throw ContractError("refine_member_label: member position equals anchor position");
  std::vector<double> t(n_fine, 0.0);
  t[z] = 1.0 - epsilon;
  t[d] = epsilon;
  return t;
}

std::vector<double> refined_target(std::size_t position, std::size_t n_fine, double epsilon) {
  return position == 0 ? refine_anchor_label(n_fine, epsilon)
                       : refine_member_label(position, 0, n_fine, epsilon);
}

double refined_ce_loss(std::span<const double> probs, std::span<const double> refined) {
  if (probs.size() != refined.size())
    throw ShapeError("refined_ce_loss: prediction has " + std::to_string(probs.size()) +
                     " entries, target has " + std::to_string(refined.size()));
  return ce_loss(probs, refined);
}

} // namespace scm
