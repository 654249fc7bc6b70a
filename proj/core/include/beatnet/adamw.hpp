#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace beatnet::ad {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Per-parameter moments, keyed by parameter name. Decoupled weight decay:
// the decay term multiplies the parameter directly, it never enters the
// moment estimates.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  // params and grads are flat value vectors addressed by name; shapes must
  // agree between calls. Throws on non-finite gradients.
  void step(std::map<std::string, std::vector<double>>& params,
            const std::map<std::string, std::vector<double>>& grads);

  std::size_t step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamWConfig cfg_;
  std::size_t step_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace beatnet::ad
