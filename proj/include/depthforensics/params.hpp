#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dfx {

class Rng;

struct Param {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<double> value;
};

// Flat registry of named trainable matrices. Modules hold indices into it.
class ParamStore {
 public:
  int add(std::string name, int rows, int cols);
  int add_zeros(std::string name, int rows, int cols) { return add(std::move(name), rows, cols); }
  int add_constant(std::string name, int rows, int cols, double v);
  int add_trunc_normal(std::string name, int rows, int cols, double std, Rng& rng);
  int add_normal(std::string name, int rows, int cols, double std, Rng& rng);

  const Param& at(int id) const { return params_.at(id); }
  Param& at(int id) { return params_.at(id); }
  int find(std::string_view name) const;  // -1 when absent
  int size() const { return static_cast<int>(params_.size()); }
  std::size_t scalar_count() const;

  std::vector<std::vector<double>> zeros_like() const;

  const std::vector<Param>& all() const { return params_; }

 private:
  std::vector<Param> params_;
};

}  // namespace dfx
