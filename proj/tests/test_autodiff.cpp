#include "doctest.h"

#include <cmath>
#include <functional>
#include <random>

#include "beatnet/adamw.hpp"
#include "beatnet/tensor.hpp"

using namespace beatnet;
using ad::Tensor;

namespace {

// Central finite differences against the analytic gradient of a scalar
// function of one leaf tensor.
void check_grads(Tensor& leaf, const std::function<Tensor()>& f, double h = 1e-5,
                 double tol = 1e-4) {
  Tensor loss = f();
  ad::backward(loss);
  std::vector<double> analytic = leaf.grad();
  REQUIRE(analytic.size() == leaf.size());
  for (std::size_t i = 0; i < leaf.size(); ++i) {
    const double orig = leaf.data()[i];
    leaf.data()[i] = orig + h;
    const double up = f().item();
    leaf.data()[i] = orig - h;
    const double down = f().item();
    leaf.data()[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({1e-6, std::abs(fd), std::abs(analytic[i])});
    CHECK(std::abs(fd - analytic[i]) / denom < tol);
  }
}

Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, bool grad = true) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) x = d(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

}  // namespace

TEST_CASE("matmul shapes and simple values") {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3, 4}, std::vector<double>(12, 1.0));
  Tensor c = ad::matmul(a, b);
  CHECK(c.shape() == ad::Shape{2, 4});
  CHECK(c.data()[0] == doctest::Approx(6.0));
  CHECK(c.data()[7] == doctest::Approx(15.0));
  CHECK_THROWS_WITH_AS(ad::matmul(a, a), doctest::Contains("[2,3]"), std::invalid_argument);
}

TEST_CASE("softmax of zeros is uniform") {
  Tensor x({3}, {0, 0, 0});
  Tensor y = ad::softmax_rows(x);
  for (double v : y.data()) CHECK(v == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("conv1d length arithmetic") {
  Tensor x({1, 1, 10}, std::vector<double>(10, 1.0));
  Tensor w({1, 1, 3}, {1, 1, 1});
  Tensor b({1}, {0});
  Tensor y = ad::conv1d(x, w, b, 1, 1);
  CHECK(y.shape() == ad::Shape{1, 1, 10});
}

TEST_CASE("backward of sum of squares") {
  Tensor w({2}, {1, 2}, true);
  Tensor loss = ad::sum(ad::mul(w, w));
  ad::backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(2.0));
  CHECK(w.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("non-scalar loss rejected") {
  Tensor w({2}, {1, 2}, true);
  CHECK_THROWS_AS(ad::backward(ad::mul(w, w)), std::invalid_argument);
}

TEST_CASE("unreached parameter gets zero grad") {
  Tensor w({2}, {1, 2}, true);
  Tensor u({2}, {3, 4}, true);
  Tensor loss = ad::sum(ad::mul(w, w));
  ad::backward(loss);
  // u never entered the graph; its grad is empty/zero by contract.
  CHECK(u.grad().size() == 0);
}

TEST_CASE("finite differences: every primitive") {
  std::mt19937_64 rng(7);

  SUBCASE("add with trailing broadcast") {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4}, rng, false);
    check_grads(a, [&] { return ad::sum(ad::mul(ad::add(a, b), ad::add(a, b))); });
  }
  SUBCASE("mul broadcast, grad in small operand") {
    Tensor a = random_tensor({3, 4}, rng, false);
    Tensor b = random_tensor({4}, rng);
    check_grads(b, [&] { return ad::sum(ad::mul(ad::mul(a, b), ad::mul(a, b))); });
  }
  SUBCASE("matmul") {
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({3, 4}, rng, false);
    check_grads(a, [&] {
      Tensor y = ad::matmul(a, b);
      return ad::sum(ad::mul(y, y));
    });
  }
  SUBCASE("conv1d stride 2 with padding") {
    Tensor x = random_tensor({2, 2, 11}, rng);
    Tensor w = random_tensor({3, 2, 5}, rng, false);
    Tensor b = random_tensor({3}, rng, false);
    check_grads(x, [&] {
      Tensor y = ad::conv1d(x, w, b, 2, 2);
      return ad::sum(ad::mul(y, y));
    });
  }
  SUBCASE("conv1d weight and bias grads") {
    Tensor x = random_tensor({1, 2, 9}, rng, false);
    Tensor w = random_tensor({2, 2, 3}, rng);
    Tensor b = random_tensor({2}, rng);
    check_grads(w, [&] {
      Tensor y = ad::conv1d(x, w, b, 1, 1);
      return ad::sum(ad::mul(y, y));
    });
    check_grads(b, [&] {
      Tensor y = ad::conv1d(x, w, b, 1, 1);
      return ad::sum(ad::mul(y, y));
    });
  }
  SUBCASE("relu and gelu") {
    Tensor x = random_tensor({10}, rng);
    check_grads(x, [&] { return ad::sum(ad::mul(ad::relu(x), ad::gelu(x))); });
  }
  SUBCASE("layer_norm") {
    Tensor x = random_tensor({3, 5}, rng);
    Tensor g = random_tensor({5}, rng, false);
    Tensor b = random_tensor({5}, rng, false);
    check_grads(x, [&] {
      Tensor y = ad::layer_norm(x, g, b);
      return ad::sum(ad::mul(y, y));
    }, 1e-5, 5e-4);
  }
  SUBCASE("layer_norm gamma/beta") {
    Tensor x = random_tensor({3, 5}, rng, false);
    Tensor g = random_tensor({5}, rng);
    Tensor b = random_tensor({5}, rng);
    check_grads(g, [&] {
      Tensor y = ad::layer_norm(x, g, b);
      return ad::sum(ad::mul(y, y));
    });
    check_grads(b, [&] {
      Tensor y = ad::layer_norm(x, g, b);
      return ad::sum(ad::mul(y, y));
    });
  }
  SUBCASE("softmax") {
    Tensor x = random_tensor({2, 6}, rng);
    Tensor probe = random_tensor({2, 6}, rng, false);
    check_grads(x, [&] { return ad::sum(ad::mul(ad::softmax_rows(x), probe)); });
  }
  SUBCASE("masked softmax") {
    Tensor x = random_tensor({3, 5}, rng);
    Tensor probe = random_tensor({3, 5}, rng, false);
    std::vector<std::uint8_t> mask = {1, 0, 1, 1, 0};
    check_grads(x, [&] { return ad::sum(ad::mul(ad::masked_softmax_rows(x, mask), probe)); });
  }
  SUBCASE("mean_last and masked_mean_rows") {
    Tensor x = random_tensor({4, 6}, rng);
    std::vector<std::uint8_t> mask = {1, 1, 0, 1};
    check_grads(x, [&] {
      Tensor m = ad::masked_mean_rows(x, mask);
      Tensor ml = ad::mean_last(x);
      return ad::add(ad::sum(ad::mul(m, m)), ad::sum(ad::mul(ml, ml)));
    });
  }
  SUBCASE("embedding") {
    Tensor table = random_tensor({4, 3}, rng);
    std::vector<std::size_t> idx = {0, 2, 2, 1};
    check_grads(table, [&] {
      Tensor e = ad::embedding(table, idx);
      return ad::sum(ad::mul(e, e));
    });
  }
  SUBCASE("transpose, reshape, slices, concat") {
    Tensor x = random_tensor({3, 4}, rng);
    check_grads(x, [&] {
      Tensor t = ad::transpose(x);
      Tensor s1 = ad::slice_cols(x, 0, 2);
      Tensor s2 = ad::slice_cols(x, 2, 4);
      Tensor cc = ad::concat_cols({s2, s1});
      Tensor rr = ad::concat_rows({cc, ad::reshape(ad::transpose(t), {3, 4})});
      return ad::sum(ad::mul(rr, rr));
    });
  }
  SUBCASE("bce_with_logits") {
    Tensor x = random_tensor({5}, rng);
    std::vector<double> y = {1, 0, 1, 1, 0};
    check_grads(x, [&] { return ad::bce_with_logits(x, y); });
  }
}

TEST_CASE("backward linearity") {
  std::mt19937_64 rng(11);
  Tensor w = random_tensor({6}, rng);
  Tensor c1 = random_tensor({6}, rng, false);
  Tensor c2 = random_tensor({6}, rng, false);
  auto l1 = [&] { return ad::sum(ad::mul(w, c1)); };
  auto l2 = [&] { return ad::sum(ad::mul(ad::mul(w, w), c2)); };
  const double a = 2.5;

  ad::backward(l1());
  auto g1 = w.grad();
  ad::backward(l2());
  auto g2 = w.grad();
  ad::backward(ad::add(ad::scale(l1(), a), l2()));
  auto gc = w.grad();
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(gc[i] == doctest::Approx(a * g1[i] + g2[i]).epsilon(1e-9));
}

TEST_CASE("shape mismatch reports both shapes") {
  Tensor a({2, 3}, std::vector<double>(6, 0.0));
  Tensor b({2}, {0, 0});
  CHECK_THROWS_WITH_AS(ad::add(a, b), doctest::Contains("[2]"), std::invalid_argument);
}

TEST_CASE("adamw closed-form cases") {
  SUBCASE("zero gradient, zero weight decay leaves params unchanged") {
    ad::AdamW opt({1e-3, 0.9, 0.999, 1e-8, 0.0});
    std::map<std::string, std::vector<double>> p{{"w", {1.5, -2.0}}};
    std::map<std::string, std::vector<double>> g{{"w", {0.0, 0.0}}};
    opt.step(p, g);
    CHECK(p["w"][0] == doctest::Approx(1.5));
    CHECK(p["w"][1] == doctest::Approx(-2.0));
  }
  SUBCASE("first step with g=1 moves by about -lr") {
    ad::AdamW opt({1e-3, 0.9, 0.999, 1e-8, 0.0});
    std::map<std::string, std::vector<double>> p{{"w", {0.0}}};
    std::map<std::string, std::vector<double>> g{{"w", {1.0}}};
    opt.step(p, g);
    CHECK(p["w"][0] == doctest::Approx(-1e-3).epsilon(1e-4));
  }
  SUBCASE("decoupled decay with zero gradient") {
    ad::AdamW opt({1e-3, 0.9, 0.999, 1e-8, 0.01});
    std::map<std::string, std::vector<double>> p{{"w", {2.0}}};
    std::map<std::string, std::vector<double>> g{{"w", {0.0}}};
    opt.step(p, g);
    CHECK(p["w"][0] == doctest::Approx(2.0 * (1.0 - 1e-3 * 0.01)));
  }
  SUBCASE("gains and biases are exempt from decay") {
    ad::AdamW opt({1e-3, 0.9, 0.999, 1e-8, 0.01});
    std::map<std::string, std::vector<double>> p{{"ln.g", {1.0}}, {"ln.b", {2.0}}};
    std::map<std::string, std::vector<double>> g{{"ln.g", {0.0}}, {"ln.b", {0.0}}};
    opt.step(p, g);
    CHECK(p["ln.g"][0] == doctest::Approx(1.0));
    CHECK(p["ln.b"][0] == doctest::Approx(2.0));
  }
  SUBCASE("non-finite gradient rejected") {
    ad::AdamW opt({1e-3, 0.9, 0.999, 1e-8, 0.0});
    std::map<std::string, std::vector<double>> p{{"w", {0.0}}};
    std::map<std::string, std::vector<double>> g{{"w", {std::nan("")}}};
    CHECK_THROWS_AS(opt.step(p, g), std::runtime_error);
  }
}
