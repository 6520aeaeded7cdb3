#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rawradar/autograd.hpp"
#include "rawradar/vae.hpp"

namespace rawradar {

using NamedReport = std::pair<std::string, ag::GradCheckReport>;

// Central-difference check of every autograd primitive on random inputs.
std::vector<NamedReport> primitive_grad_checks(std::uint64_t seed, double tolerance = 1e-3);

// CFEL layer gradients with respect to random (non-harmonic) frequencies and the input frame.
ag::GradCheckReport cfel_grad_check(std::uint64_t seed, double tolerance = 1e-4);

// total_loss (focal + beta * DA + theta * KL, dropout on) against a perturbed
// reference, sampling `per_param` elements of every parameter.
ag::GradCheckReport model_grad_check(const ArchConfig& arch, std::uint64_t seed, double tolerance = 1e-3,
                                     std::size_t per_param = 24);

}  // namespace rawradar
