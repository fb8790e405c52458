#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace idc {

// Dense row-major f64 tensor. Copies share storage; the gradient buffer is
// shared too, so accumulation lands on the leaf no matter which copy a
// recorded op captured.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape, bool requires_grad = false);
  Tensor(std::vector<int64_t> shape, std::vector<double> values,
         bool requires_grad = false);

  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<int64_t> shape, double value,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  int64_t numel() const;
  int64_t ndim() const { return int64_t(shape.size()); }
  // Leading dims collapsed; the tensor viewed as [outer_rows, cols].
  int64_t cols() const { return shape.empty() ? 1 : shape.back(); }
  int64_t outer_rows() const;
  bool is_scalar() const { return numel() == 1; }

  double* ptr() { return data->data(); }
  const double* ptr() const { return data->data(); }
  double& at(int64_t i) { return (*data)[i]; }
  double at(int64_t i) const { return (*data)[i]; }
  double& at2(int64_t i, int64_t j) { return (*data)[i * cols() + j]; }
  double at2(int64_t i, int64_t j) const { return (*data)[i * cols() + j]; }

  void ensure_grad();            // allocate zero-filled grad if absent
  void zero_grad();              // zero (and allocate) the grad buffer
  double* grad_ptr() { return grad->data(); }
  const double* grad_ptr() const { return grad->data(); }

  bool defined() const { return data != nullptr; }
  std::string shape_str() const;

  std::vector<int64_t> shape;
  std::shared_ptr<std::vector<double>> data;
  std::shared_ptr<std::vector<double>> grad;  // lazily allocated
  bool requires_grad = false;
};

// Reverse-mode tape. Nodes are recorded in construction order, which is a
// topological order of the DAG; backward replays them once, in reverse.
class Tape {
 public:
  void record(std::function<void()> backward_fn);
  void run_backward();
  void clear();
  size_t size() const { return nodes_.size(); }

  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<std::function<void()>> nodes_;
};

// Makes a tape current for the enclosing scope. Ops executed with no
// active tape run forward-only.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Suspends recording for the enclosing scope (generation inside training).
class NoTapeScope {
 public:
  NoTapeScope();
  ~NoTapeScope();
  NoTapeScope(const NoTapeScope&) = delete;
  NoTapeScope& operator=(const NoTapeScope&) = delete;

 private:
  Tape* prev_;
};

// Debug guard: when enabled, every op asserts its output is NaN/Inf free.
void set_finite_checks(bool on);
bool finite_checks();

// --- ops ------------------------------------------------------------------
// Backward rules, with C the op output and dC its gradient:
//   matmul:     dA += dC * B^T,  dB += A^T * dC
//   matmul_nt:  C = A * B^T;  dA += dC * B,  dB += dC^T * A
//   add:        dA += dC,  dB += dC
//   add_rowvec: dA += dC,  dV += column-sums of dC
//   scale:      dA += s * dC
//   slice_cols: dA[:, c0:c1] += dC
//   concat_*:   gradient splits back to the parts
//   gather:     dTable[row ids] += dC rows (first-occurrence order)

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& a, const Tensor& v);
Tensor scale(const Tensor& a, double s);
Tensor softmax(const Tensor& x);  // over the last axis
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor embedding_gather(const Tensor& table, const std::vector<int>& ids);

// Mean negative log-softmax over non-pad positions. An all-pad target is
// defined as 0 and flips *all_pad_warn when given.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     int pad_id, bool* all_pad_warn = nullptr);

// Seeds d(loss)/d(loss) = 1 and replays the active tape in reverse.
// Repeated calls without zero_grad accumulate.
void backward(Tensor& loss);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst;  // "name[index]" of the worst entry
  int64_t checked = 0;
  bool pass = false;
};

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

// Central-difference check of d f / d params. max_probes_per_tensor == 0
// probes every entry; otherwise entries are strided to that budget.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<NamedParam>& params,
                           double h = 1e-5, double tol = 1e-4,
                           int64_t max_probes_per_tensor = 0);

}  // namespace idc
