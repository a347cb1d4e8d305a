#pragma once

// Training objective: L_total = L_c + alpha * L_ssim + beta * L_patch_mse.

#include <span>
#include <vector>

#include "depthforensics/autograd.hpp"

namespace dfx::loss {

struct LossWeights {
  double alpha = 0.7;
  double beta = 0.7;
};

// Standard constants for a unit dynamic range.
struct SsimConstants {
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

// Global-statistics SSIM (one window over the whole signal).
double ssim(std::span<const double> a, std::span<const double> b, const SsimConstants& c = {});
// 1 - SSIM: zero for identical signals.
double ssim_loss(std::span<const double> a, std::span<const double> b, const SsimConstants& c = {});

// Sum over samples and patches of |a - b|; rows are samples.
double patch_mse(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& target);

double total_loss(double classification, double ssim_term, double patch_term, const LossWeights& w = {});

ag::Var ssim_loss(ag::Tape& t, ag::Var pred, ag::Var target, const SsimConstants& c = {});
ag::Var patch_mse(ag::Tape& t, ag::Var pred, ag::Var target);
ag::Var total_loss(ag::Tape& t, ag::Var classification, ag::Var ssim_term, ag::Var patch_term,
                   const LossWeights& w = {});

}  // namespace dfx::loss

namespace dfx::metrics {

double accuracy(std::span<const int> predicted, std::span<const int> truth);

// Mann-Whitney AUC: P(score of a positive > score of a negative), ties count
// one half. Labels are 0/1; throws when either class is absent.
double auc(std::span<const double> scores, std::span<const int> labels);

}  // namespace dfx::metrics
