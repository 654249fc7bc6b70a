#include "beatnet/adamw.hpp"

#include <cmath>
#include <stdexcept>

namespace beatnet::ad {

namespace {

// Only weight matrices decay. Decaying a norm or FiLM gain initialized at 1
// drags it toward 0, so the identity map itself gets penalized; biases and
// embedding tables are likewise conventionally exempt.
bool decayed(const std::string& name) {
  const auto pos = name.rfind('.');
  const std::string leaf = pos == std::string::npos ? name : name.substr(pos + 1);
  return !leaf.empty() && leaf.front() == 'w';
}

}  // namespace

void AdamW::step(std::map<std::string, std::vector<double>>& params,
                 const std::map<std::string, std::vector<double>>& grads) {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end())
      throw std::invalid_argument("adamw: missing gradient for parameter " + name);
    const auto& g = git->second;
    const double wd = decayed(name) ? cfg_.weight_decay : 0.0;
    if (g.size() != p.size())
      throw std::invalid_argument("adamw: gradient size mismatch for " + name);
    auto& mom = state_[name];
    if (mom.m.empty()) {
      mom.m.assign(p.size(), 0.0);
      mom.v.assign(p.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw std::runtime_error("adamw: non-finite gradient in " + name);
      mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g[i];
      mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      p[i] -= cfg_.lr * wd * p[i];
      p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace beatnet::ad
