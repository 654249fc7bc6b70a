// Reverse-mode autodiff over dense double tensors. Dynamic tape: every op
// records a backward closure on the output node; backward() walks the graph
// in reverse topological order.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace beatnet::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node {
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily during backward
  Shape shape;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;  // adds d(output)/d(parent) into parent grads
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  std::size_t size() const { return n_->value.size(); }
  std::size_t ndim() const { return n_->shape.size(); }

  const std::vector<double>& data() const { return n_->value; }
  std::vector<double>& data() { return n_->value; }
  const std::vector<double>& grad() const { return n_->grad; }

  bool requires_grad() const { return n_->requires_grad; }
  double item() const;

  std::shared_ptr<Node> node() const { return n_; }
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

 private:
  std::shared_ptr<Node> n_;
};

// --- elementwise / structural ---
// add/mul broadcast b over a when b's shape equals a trailing suffix of a's.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form

Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);                       // 2-D
Tensor transpose_last2(const Tensor& a);                 // swap last two dims
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);  // [m,n] -> [m,c1-c0)
Tensor concat_cols(const std::vector<Tensor>& parts);    // [m,n_i] pieces
Tensor concat_rows(const std::vector<Tensor>& parts);    // [m_i,n] pieces

// --- linear algebra / nets ---
Tensor matmul(const Tensor& a, const Tensor& b);         // [m,k]x[k,n]
// x [N,Cin,T], w [Cout,Cin,K], bias [Cout]; zero padding.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::size_t stride, std::size_t pad);
// Normalizes the last dimension; gamma/beta are [D].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
Tensor softmax_rows(const Tensor& x);  // softmax over last dim
// Adds -inf to columns where key_valid==0 before the row softmax. Rows must
// have at least one valid key.
Tensor masked_softmax_rows(const Tensor& x, const std::vector<std::uint8_t>& key_valid);
Tensor mean_last(const Tensor& x);     // mean over last dim
// Mean over rows of [S,D] restricted to valid rows -> [D].
Tensor masked_mean_rows(const Tensor& x, const std::vector<std::uint8_t>& valid);
// table [V,D], idx values in [0,V) -> [N,D]; backward scatter-adds.
Tensor embedding(const Tensor& table, const std::vector<std::size_t>& idx);
Tensor sum(const Tensor& a);           // -> scalar

// Mean over K labels of the numerically stable BCE-with-logits.
Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& labels);

// Seeds d(loss)=1 and propagates. loss must be a scalar with grad-requiring
// ancestry. Grads of every node in the subgraph are (re)initialized to zero
// first, so repeated calls on fresh graphs sharing leaf parameters are safe.
void backward(const Tensor& loss);

bool all_finite(const Tensor& t);

}  // namespace beatnet::ad
