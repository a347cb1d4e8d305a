#include "depthforensics/error.hpp"
#include "depthforensics/params.hpp"
#include "depthforensics/rng.hpp"

#include <cmath>
#include <numbers>

namespace dfx {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::Io: return "IO_ERROR";
    case ErrorCode::Format: return "FORMAT_ERROR";
    case ErrorCode::Numeric: return "NUMERIC_ERROR";
    case ErrorCode::State: return "STATE_ERROR";
    case ErrorCode::Internal: return "INTERNAL_ERROR";
  }
  return "INTERNAL_ERROR";
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

int Rng::uniform_int(int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(engine_() % span);
}

double Rng::normal() {
  // Box-Muller; one value per call keeps the stream position simple.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::trunc_normal(double std) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= 2.0) return z * std;
  }
}

Rng Rng::fork(std::uint64_t tag) const { return Rng(mix_seed(seed_, tag)); }

int ParamStore::add(std::string name, int rows, int cols) {
  require(rows > 0 && cols > 0, "parameter '" + name + "' must have positive shape");
  require(find(name) < 0, "duplicate parameter name '" + name + "'");
  Param p;
  p.name = std::move(name);
  p.rows = rows;
  p.cols = cols;
  p.value.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size()) - 1;
}

int ParamStore::add_constant(std::string name, int rows, int cols, double v) {
  const int id = add(std::move(name), rows, cols);
  std::fill(params_[id].value.begin(), params_[id].value.end(), v);
  return id;
}

int ParamStore::add_trunc_normal(std::string name, int rows, int cols, double std, Rng& rng) {
  const int id = add(std::move(name), rows, cols);
  for (double& v : params_[id].value) v = rng.trunc_normal(std);
  return id;
}

int ParamStore::add_normal(std::string name, int rows, int cols, double std, Rng& rng) {
  const int id = add(std::move(name), rows, cols);
  for (double& v : params_[id].value) v = rng.normal() * std;
  return id;
}

int ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return static_cast<int>(i);
  return -1;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<std::vector<double>> ParamStore::zeros_like() const {
  std::vector<std::vector<double>> out(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) out[i].assign(params_[i].value.size(), 0.0);
  return out;
}

}  // namespace dfx
