#include "idc/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "idc/kernels.hpp"

namespace idc {

namespace {

thread_local Tape* g_active_tape = nullptr;
bool g_finite_checks = false;

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor extent must be positive");
    n *= d;
  }
  return n;
}

void check_finite(const Tensor& t, const char* op) {
  if (!g_finite_checks) return;
  for (double v : *t.data)
    if (!std::isfinite(v))
      throw std::runtime_error(std::string(op) +
                               ": non-finite value in output " + t.shape_str());
}

bool tape_wants(const Tensor& out) {
  return g_active_tape != nullptr && out.requires_grad;
}

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2)
    throw std::invalid_argument(std::string(op) + ": expected 2-d tensor, got " +
                                t.shape_str());
}

}  // namespace

// The grad buffer is allocated together with requires_grad so that every
// copy of the tensor (including the ones captured on the tape) shares it.
Tensor::Tensor(std::vector<int64_t> shape_in, bool rg)
    : shape(std::move(shape_in)),
      data(std::make_shared<std::vector<double>>(shape_numel(shape), 0.0)),
      requires_grad(rg) {
  if (rg) ensure_grad();
}

Tensor::Tensor(std::vector<int64_t> shape_in, std::vector<double> values,
               bool rg)
    : shape(std::move(shape_in)),
      data(std::make_shared<std::vector<double>>(std::move(values))),
      requires_grad(rg) {
  if (shape_numel(shape) != int64_t(data->size()))
    throw std::invalid_argument("tensor shape " + shape_str() +
                                " does not match value count " +
                                std::to_string(data->size()));
  if (rg) ensure_grad();
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool rg) {
  return Tensor(std::move(shape), rg);
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, bool rg) {
  Tensor t(std::move(shape), rg);
  std::fill(t.data->begin(), t.data->end(), value);
  return t;
}

Tensor Tensor::scalar(double value, bool rg) {
  return Tensor({1, 1}, {value}, rg);
}

int64_t Tensor::numel() const { return int64_t(data ? data->size() : 0); }

int64_t Tensor::outer_rows() const {
  if (shape.empty()) return 1;
  int64_t r = 1;
  for (size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
  return r;
}

void Tensor::ensure_grad() {
  if (!grad) grad = std::make_shared<std::vector<double>>(data->size(), 0.0);
}

void Tensor::zero_grad() {
  ensure_grad();
  std::fill(grad->begin(), grad->end(), 0.0);
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i)
    os << shape[i] << (i + 1 < shape.size() ? "," : "");
  os << "]";
  return os.str();
}

void Tape::record(std::function<void()> backward_fn) {
  nodes_.push_back(std::move(backward_fn));
}

void Tape::run_backward() {
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void Tape::clear() { nodes_.clear(); }

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = prev_; }

NoTapeScope::NoTapeScope() : prev_(g_active_tape) { g_active_tape = nullptr; }

NoTapeScope::~NoTapeScope() { g_active_tape = prev_; }

void set_finite_checks(bool on) { g_finite_checks = on; }
bool finite_checks() { return g_finite_checks; }

// --- ops --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.shape[1] != b.shape[0])
    throw std::invalid_argument("matmul: shape mismatch " + a.shape_str() +
                                " x " + b.shape_str());
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out({m, n}, a.requires_grad || b.requires_grad);
  kernels::matmul_nn(m, k, n, a.ptr(), b.ptr(), out.ptr());
  check_finite(out, "matmul");
  if (tape_wants(out)) {
    g_active_tape->record([a = a, b = b, out = out]() mutable {
      const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
      if (a.requires_grad) {
        a.ensure_grad();
        kernels::matmul_nt(m, n, k, out.grad_ptr(), b.ptr(), a.grad_ptr(),
                           true);
      }
      if (b.requires_grad) {
        b.ensure_grad();
        kernels::matmul_tn(m, k, n, a.ptr(), out.grad_ptr(), b.grad_ptr(),
                           true);
      }
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  if (a.shape[1] != b.shape[1])
    throw std::invalid_argument("matmul_nt: shape mismatch " + a.shape_str() +
                                " x " + b.shape_str() + "^T");
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
  Tensor out({m, n}, a.requires_grad || b.requires_grad);
  kernels::matmul_nt(m, k, n, a.ptr(), b.ptr(), out.ptr());
  check_finite(out, "matmul_nt");
  if (tape_wants(out)) {
    g_active_tape->record([a = a, b = b, out = out]() mutable {
      const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
      if (a.requires_grad) {
        a.ensure_grad();
        kernels::matmul_nn(m, n, k, out.grad_ptr(), b.ptr(), a.grad_ptr(),
                           true);
      }
      if (b.requires_grad) {
        b.ensure_grad();
        kernels::matmul_tn(m, n, k, out.grad_ptr(), a.ptr(), b.grad_ptr(),
                           true);
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape)
    throw std::invalid_argument("add: shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
  Tensor out(a.shape, a.requires_grad || b.requires_grad);
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) + b.at(i);
  check_finite(out, "add");
  if (tape_wants(out)) {
    g_active_tape->record([a = a, b = b, out = out]() mutable {
      const int64_t n = out.numel();
      if (a.requires_grad) {
        a.ensure_grad();
        for (int64_t i = 0; i < n; ++i) (*a.grad)[i] += (*out.grad)[i];
      }
      if (b.requires_grad) {
        b.ensure_grad();
        for (int64_t i = 0; i < n; ++i) (*b.grad)[i] += (*out.grad)[i];
      }
    });
  }
  return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  const int64_t n = a.cols();
  if (v.numel() != n)
    throw std::invalid_argument("add_rowvec: vector " + v.shape_str() +
                                " does not match row width of " +
                                a.shape_str());
  Tensor out(a.shape, a.requires_grad || v.requires_grad);
  const int64_t rows = a.outer_rows();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < n; ++j)
      out.at(r * n + j) = a.at(r * n + j) + v.at(j);
  check_finite(out, "add_rowvec");
  if (tape_wants(out)) {
    g_active_tape->record([a = a, v = v, out = out]() mutable {
      const int64_t rows = a.outer_rows(), n = a.cols();
      if (a.requires_grad) {
        a.ensure_grad();
        for (int64_t i = 0; i < rows * n; ++i) (*a.grad)[i] += (*out.grad)[i];
      }
      if (v.requires_grad) {
        v.ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < n; ++j)
            (*v.grad)[j] += (*out.grad)[r * n + j];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape, a.requires_grad);
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = s * a.at(i);
  check_finite(out, "scale");
  if (tape_wants(out)) {
    g_active_tape->record([a = a, out = out, s]() mutable {
      if (!a.requires_grad) return;
      a.ensure_grad();
      const int64_t n = out.numel();
      for (int64_t i = 0; i < n; ++i) (*a.grad)[i] += s * (*out.grad)[i];
    });
  }
  return out;
}

Tensor softmax(const Tensor& x) {
  Tensor out(x.shape, x.requires_grad);
  kernels::softmax_rows(x.outer_rows(), x.cols(), x.ptr(), out.ptr());
  check_finite(out, "softmax");
  if (tape_wants(out)) {
    g_active_tape->record([x = x, out = out]() mutable {
      if (!x.requires_grad) return;
      x.ensure_grad();
      kernels::softmax_rows_bwd(x.outer_rows(), x.cols(), out.ptr(),
                                out.grad_ptr(), x.grad_ptr());
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const int64_t n = x.cols();
  if (gain.numel() != n || bias.numel() != n)
    throw std::invalid_argument("layer_norm: gain/bias width mismatch with " +
                                x.shape_str());
  if (eps <= 0) throw std::invalid_argument("layer_norm: eps must be > 0");
  const int64_t rows = x.outer_rows();
  Tensor out(x.shape,
             x.requires_grad || gain.requires_grad || bias.requires_grad);
  auto mean = std::make_shared<std::vector<double>>(rows);
  auto rstd = std::make_shared<std::vector<double>>(rows);
  kernels::layer_norm_rows(rows, n, x.ptr(), gain.ptr(), bias.ptr(), eps,
                           out.ptr(), mean->data(), rstd->data());
  check_finite(out, "layer_norm");
  if (tape_wants(out)) {
    g_active_tape->record([x = x, gain = gain, bias = bias, out = out, mean,
                           rstd]() mutable {
      const int64_t rows = x.outer_rows(), n = x.cols();
      // dgain/dbias accumulate even when only x needs grad; cheap scratch
      // buffers keep the kernel signature uniform.
      std::vector<double> scratch_g, scratch_b;
      double* dgain_p;
      double* dbias_p;
      if (gain.requires_grad) {
        gain.ensure_grad();
        dgain_p = gain.grad_ptr();
      } else {
        scratch_g.assign(n, 0.0);
        dgain_p = scratch_g.data();
      }
      if (bias.requires_grad) {
        bias.ensure_grad();
        dbias_p = bias.grad_ptr();
      } else {
        scratch_b.assign(n, 0.0);
        dbias_p = scratch_b.data();
      }
      std::vector<double> dx_scratch;
      double* dx_p = nullptr;
      if (x.requires_grad) {
        x.ensure_grad();
        dx_p = x.grad_ptr();
      } else {
        dx_scratch.assign(rows * n, 0.0);
        dx_p = dx_scratch.data();
      }
      kernels::layer_norm_rows_bwd(rows, n, x.ptr(), gain.ptr(), mean->data(),
                                   rstd->data(), out.grad_ptr(), dx_p, dgain_p,
                                   dbias_p);
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape, x.requires_grad);
  kernels::gelu(x.numel(), x.ptr(), out.ptr());
  check_finite(out, "gelu");
  if (tape_wants(out)) {
    g_active_tape->record([x = x, out = out]() mutable {
      if (!x.requires_grad) return;
      x.ensure_grad();
      kernels::gelu_bwd(x.numel(), x.ptr(), out.grad_ptr(), x.grad_ptr());
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1) {
  require_2d(x, "slice_cols");
  const int64_t rows = x.shape[0], n = x.shape[1];
  if (c0 < 0 || c1 > n || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range [" +
                                std::to_string(c0) + "," + std::to_string(c1) +
                                ") for " + x.shape_str());
  const int64_t w = c1 - c0;
  Tensor out({rows, w}, x.requires_grad);
  for (int64_t r = 0; r < rows; ++r)
    std::memcpy(out.ptr() + r * w, x.ptr() + r * n + c0, w * sizeof(double));
  if (tape_wants(out)) {
    g_active_tape->record([x = x, out = out, c0, w]() mutable {
      if (!x.requires_grad) return;
      x.ensure_grad();
      const int64_t rows = x.shape[0], n = x.shape[1];
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < w; ++j)
          (*x.grad)[r * n + c0 + j] += (*out.grad)[r * w + j];
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int64_t rows = parts[0].shape[0];
  int64_t total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_cols");
    if (p.shape[0] != rows)
      throw std::invalid_argument("concat_cols: row mismatch " +
                                  p.shape_str());
    total += p.shape[1];
    rg = rg || p.requires_grad;
  }
  Tensor out({rows, total}, rg);
  int64_t off = 0;
  for (const Tensor& p : parts) {
    const int64_t w = p.shape[1];
    for (int64_t r = 0; r < rows; ++r)
      std::memcpy(out.ptr() + r * total + off, p.ptr() + r * w,
                  w * sizeof(double));
    off += w;
  }
  if (tape_wants(out)) {
    g_active_tape->record([parts = parts, out = out, total]() mutable {
      int64_t off = 0;
      for (Tensor& p : parts) {
        const int64_t rows = p.shape[0], w = p.shape[1];
        if (p.requires_grad) {
          p.ensure_grad();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < w; ++j)
              (*p.grad)[r * w + j] += (*out.grad)[r * total + off + j];
        }
        off += w;
      }
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int64_t n = parts[0].shape[1];
  int64_t total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_rows");
    if (p.shape[1] != n)
      throw std::invalid_argument("concat_rows: column mismatch " +
                                  p.shape_str());
    total += p.shape[0];
    rg = rg || p.requires_grad;
  }
  Tensor out({total, n}, rg);
  int64_t off = 0;
  for (const Tensor& p : parts) {
    std::memcpy(out.ptr() + off * n, p.ptr(), p.numel() * sizeof(double));
    off += p.shape[0];
  }
  if (tape_wants(out)) {
    g_active_tape->record([parts = parts, out = out, n]() mutable {
      int64_t off = 0;
      for (Tensor& p : parts) {
        if (p.requires_grad) {
          p.ensure_grad();
          const int64_t cnt = p.numel();
          for (int64_t i = 0; i < cnt; ++i)
            (*p.grad)[i] += (*out.grad)[off * n + i];
        }
        off += p.shape[0];
      }
    });
  }
  return out;
}

Tensor embedding_gather(const Tensor& table, const std::vector<int>& ids) {
  require_2d(table, "embedding_gather");
  const int64_t v = table.shape[0], d = table.shape[1];
  const int64_t len = int64_t(ids.size());
  for (int id : ids)
    if (id < 0 || id >= v)
      throw std::invalid_argument("embedding_gather: id " +
                                  std::to_string(id) + " outside table " +
                                  table.shape_str());
  Tensor out({len, d}, table.requires_grad);
  for (int64_t t = 0; t < len; ++t)
    std::memcpy(out.ptr() + t * d, table.ptr() + int64_t(ids[t]) * d,
                d * sizeof(double));
  if (tape_wants(out)) {
    g_active_tape->record([table = table, out = out, ids]() mutable {
      if (!table.requires_grad) return;
      table.ensure_grad();
      const int64_t d = table.shape[1];
      for (size_t t = 0; t < ids.size(); ++t)
        for (int64_t j = 0; j < d; ++j)
          (*table.grad)[int64_t(ids[t]) * d + j] += (*out.grad)[t * d + j];
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     int pad_id, bool* all_pad_warn) {
  require_2d(logits, "cross_entropy");
  const int64_t t_len = logits.shape[0], v = logits.shape[1];
  if (int64_t(targets.size()) != t_len)
    throw std::invalid_argument("cross_entropy: target count " +
                                std::to_string(targets.size()) +
                                " != logit rows " + std::to_string(t_len));
  for (int tgt : targets)
    if (tgt != pad_id && (tgt < 0 || tgt >= v))
      throw std::invalid_argument("cross_entropy: target id " +
                                  std::to_string(tgt) + " outside vocab " +
                                  std::to_string(v));
  // log-softmax with max subtraction, serial over positions.
  auto probs = std::make_shared<std::vector<double>>(t_len * v);
  kernels::softmax_rows(t_len, v, logits.ptr(), probs->data());
  int64_t active = 0;
  double loss_sum = 0.0;
  for (int64_t t = 0; t < t_len; ++t) {
    if (targets[t] == pad_id) continue;
    ++active;
    loss_sum += -std::log(std::max((*probs)[t * v + targets[t]], 1e-300));
  }
  if (active == 0 && all_pad_warn) *all_pad_warn = true;
  Tensor out = Tensor::scalar(active > 0 ? loss_sum / double(active) : 0.0);
  out.requires_grad = logits.requires_grad;
  if (out.requires_grad) out.ensure_grad();
  check_finite(out, "cross_entropy");
  if (tape_wants(out)) {
    g_active_tape->record([logits = logits, out = out, probs, targets, pad_id,
                           active]() mutable {
      if (!logits.requires_grad || active == 0) return;
      logits.ensure_grad();
      const int64_t t_len = logits.shape[0], v = logits.shape[1];
      const double g = (*out.grad)[0] / double(active);
      for (int64_t t = 0; t < t_len; ++t) {
        if (targets[t] == pad_id) continue;
        for (int64_t j = 0; j < v; ++j)
          (*logits.grad)[t * v + j] += g * (*probs)[t * v + j];
        (*logits.grad)[t * v + targets[t]] -= g;
      }
    });
  }
  return out;
}

void backward(Tensor& loss) {
  if (!loss.is_scalar())
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                loss.shape_str());
  Tape* tape = Tape::active();
  if (!tape) throw std::runtime_error("backward: no active tape");
  loss.ensure_grad();
  (*loss.grad)[0] += 1.0;
  tape->run_backward();
}

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<NamedParam>& params, double h,
                           double tol, int64_t max_probes_per_tensor) {
  // One analytic pass.
  for (const auto& p : params) p.tensor->zero_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = f();
    backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    p.tensor->ensure_grad();
    analytic.push_back(*p.tensor->grad);
  }

  GradCheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& t = *params[pi].tensor;
    const int64_t n = t.numel();
    int64_t stride = 1;
    if (max_probes_per_tensor > 0 && n > max_probes_per_tensor)
      stride = (n + max_probes_per_tensor - 1) / max_probes_per_tensor;
    for (int64_t i = 0; i < n; i += stride) {
      const double keep = t.at(i);
      t.at(i) = keep + h;
      const double fp = f().at(0);
      t.at(i) = keep - h;
      const double fm = f().at(0);
      t.at(i) = keep;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[pi][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst =
            params[pi].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace idc
