#include "depthforensics/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "depthforensics/error.hpp"

namespace dfx::loss {

double ssim(std::span<const double> a, std::span<const double> b, const SsimConstants& c) {
  require(a.size() == b.size() && !a.empty(), "ssim: inputs must be non-empty and equally shaped");
  require(c.c1 > 0.0 && c.c2 > 0.0, "ssim: constants must be positive");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double va = 0.0, vb = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
    cov += (a[i] - ma) * (b[i] - mb);
  }
  va /= n;
  vb /= n;
  cov /= n;
  return ((2 * ma * mb + c.c1) * (2 * cov + c.c2)) / ((ma * ma + mb * mb + c.c1) * (va + vb + c.c2));
}

double ssim_loss(std::span<const double> a, std::span<const double> b, const SsimConstants& c) {
  return 1.0 - ssim(a, b, c);
}

double patch_mse(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& target) {
  require(pred.size() == target.size(), "patch_mse: batch sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require(pred[i].size() == target[i].size(), "patch_mse: patch counts differ");
    // The per-patch L2 norm of a scalar difference is its absolute value.
    for (std::size_t p = 0; p < pred[i].size(); ++p) s += std::abs(pred[i][p] - target[i][p]);
  }
  return s;
}

double total_loss(double classification, double ssim_term, double patch_term, const LossWeights& w) {
  if (!std::isfinite(classification) || !std::isfinite(ssim_term) || !std::isfinite(patch_term))
    throw Error(ErrorCode::Numeric, "total_loss: non-finite loss term");
  require(w.alpha >= 0.0 && w.beta >= 0.0, "total_loss: loss weights must be non-negative");
  return classification + w.alpha * ssim_term + w.beta * patch_term;
}

ag::Var ssim_loss(ag::Tape& t, ag::Var pred, ag::Var target, const SsimConstants& c) {
  auto s = ag::ssim(t, pred, target, c.c1, c.c2);
  auto one = t.constant(1, 1, {1.0});
  return ag::sub(t, one, s);
}

ag::Var patch_mse(ag::Tape& t, ag::Var pred, ag::Var target) { return ag::abs_diff_sum(t, pred, target); }

ag::Var total_loss(ag::Tape& t, ag::Var classification, ag::Var ssim_term, ag::Var patch_term,
                   const LossWeights& w) {
  // Validates the terms and weights with the scalar overload.
  total_loss(t.scalar(classification), t.scalar(ssim_term), t.scalar(patch_term), w);
  auto x = ag::add(t, classification, ag::scale(t, ssim_term, w.alpha));
  return ag::add(t, x, ag::scale(t, patch_term, w.beta));
}

}  // namespace dfx::loss

namespace dfx::metrics {

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  require(predicted.size() == truth.size(), "accuracy: length mismatch");
  require(!predicted.empty(), "accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(predicted.size());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), "auc: length mismatch");
  std::size_t pos = 0;
  for (int l : labels) {
    require(l == 0 || l == 1, "auc: labels must be 0 or 1");
    pos += l == 1;
  }
  const std::size_t neg = labels.size() - pos;
  require(pos > 0 && neg > 0, "auc: undefined for single-class input");
  for (double s : scores) require(!std::isnan(s), "auc: NaN score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of mid-ranks (1-based) of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum += mid;
    i = j;
  }
  const double u = rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace dfx::metrics
