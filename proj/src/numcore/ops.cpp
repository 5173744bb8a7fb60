#include "fsdm/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fsdm/numcore/kernels.hpp"

namespace fsdm::numcore {
namespace {

template <typename T>
void require_same_shape(Var<T> a, Var<T> b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= 0) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
Var<T> linear(Var<T> x, Var<T> w) {
  const std::size_t r = x.rows(), in = x.cols(), out = w.rows();
  if (w.cols() != in) {
    throw ShapeError("linear: input has " + std::to_string(in) + " columns, weight expects " +
                     std::to_string(w.cols()));
  }
  const auto& k = kernels::active<T>();
  std::vector<T> y(r * out);
  const T* xv = x.value().data();
  const T* wv = w.value().data();
  for (std::size_t i = 0; i < r; ++i) k.gemv(wv, xv + i * in, y.data() + i * out, out, in);
  return x.tape().push(r, out, std::move(y), {x, w}, [x, w, r, in, out](Tape<T>& t, std::uint32_t self) {
    const auto& k = kernels::active<T>();
    const T* dy = t.grad(self).data();
    const T* xv = t.value(x.id()).data();
    const T* wv = t.value(w.id()).data();
    if (t.needs_grad(x.id())) {
      T* dx = t.grad_buffer(x.id());
      for (std::size_t i = 0; i < r; ++i) k.gemv_t_acc(wv, dy + i * out, dx + i * in, out, in);
    }
    if (t.needs_grad(w.id())) {
      T* dw = t.grad_buffer(w.id());
      for (std::size_t i = 0; i < r; ++i) k.ger_acc(dy + i * out, xv + i * in, dw, out, in);
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "add");
  const std::size_t n = a.size();
  std::vector<T> y(n);
  auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < n; ++i) y[i] = av[i] + bv[i];
  return a.tape().push(a.rows(), a.cols(), std::move(y), {a, b}, [a, b, n](Tape<T>& t, std::uint32_t self) {
    const T* dy = t.grad(self).data();
    for (Var<T> in : {a, b}) {
      if (!t.needs_grad(in.id())) continue;
      T* d = t.grad_buffer(in.id());
      for (std::size_t i = 0; i < n; ++i) d[i] += dy[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "sub");
  const std::size_t n = a.size();
  std::vector<T> y(n);
  auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < n; ++i) y[i] = av[i] - bv[i];
  return a.tape().push(a.rows(), a.cols(), std::move(y), {a, b}, [a, b, n](Tape<T>& t, std::uint32_t self) {
    const T* dy = t.grad(self).data();
    if (t.needs_grad(a.id())) {
      T* d = t.grad_buffer(a.id());
      for (std::size_t i = 0; i < n; ++i) d[i] += dy[i];
    }
    if (t.needs_grad(b.id())) {
      T* d = t.grad_buffer(b.id());
      for (std::size_t i = 0; i < n; ++i) d[i] -= dy[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "mul");
  const std::size_t n = a.size();
  std::vector<T> y(n);
  auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < n; ++i) y[i] = av[i] * bv[i];
  return a.tape().push(a.rows(), a.cols(), std::move(y), {a, b}, [a, b, n](Tape<T>& t, std::uint32_t self) {
    const T* dy = t.grad(self).data();
    const T* av = t.value(a.id()).data();
    const T* bv = t.value(b.id()).data();
    if (t.needs_grad(a.id())) {
      T* d = t.grad_buffer(a.id());
      for (std::size_t i = 0; i < n; ++i) d[i] += dy[i] * bv[i];
    }
    if (t.needs_grad(b.id())) {
      T* d = t.grad_buffer(b.id());
      for (std::size_t i = 0; i < n; ++i) d[i] += dy[i] * av[i];
    }
  });
}

template <typename T>
Var<T> add_row(Var<T> a, Var<T> b) {
  const std::size_t r = a.rows(), c = a.cols();
  if (b.rows() != 1 || b.cols() != c) throw ShapeError("add_row: row vector width mismatch");
  std::vector<T> y(r * c);
  auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = av[i * c + j] + bv[j];
  return a.tape().push(r, c, std::move(y), {a, b}, [a, b, r, c](Tape<T>& t, std::uint32_t self) {
    const T* dy = t.grad(self).data();
    if (t.needs_grad(a.id())) {
      T* d = t.grad_buffer(a.id());
      for (std::size_t i = 0; i < r * c; ++i) d[i] += dy[i];
    }
    if (t.needs_grad(b.id())) {
      T* d = t.grad_buffer(b.id());
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) d[j] += dy[i * c + j];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  const std::size_t n = a.size();
  std::vector<T> y(a.value().begin(), a.value().end());
  for (auto& v : y) v *= factor;
  return a.tape().push(a.rows(), a.cols(), std::move(y), {a}, [a, n, factor](Tape<T>& t, std::uint32_t self) {
    const T* dy = t.grad(self).data();
    T* d = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < n; ++i) d[i] += factor * dy[i];
  });
}

template <typename T>
Var<T> one_minus(Var<T> a) {
  const std::size_t n = a.size();
  std::vector<T> y(n);
  auto av = a.value();
  for (std::size_t i = 0; i < n; ++i) y[i] = T(1) - av[i];
  return a.tape().push(a.rows(), a.cols(), std::move(y), {a}, [a, n](Tape<T>& t, std::uint32_t self) {
    const T* dy = t.grad(self).data();
    T* d = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < n; ++i) d[i] -= dy[i];
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  const std::size_t n = a.size();
  std::vector<T> y(n);
  auto av = a.value();
  for (std::size_t i = 0; i < n; ++i) y[i] = stable_sigmoid(av[i]);
  return a.tape().push(a.rows(), a.cols(), std::move(y), {a}, [a, n](Tape<T>& t, std::uint32_t self) {
    const T* dy = t.grad(self).data();
    const T* yv = t.value(self).data();
    T* d = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < n; ++i) d[i] += dy[i] * yv[i] * (T(1) - yv[i]);
  });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  const std::size_t n = a.size();
  std::vector<T> y(n);
  auto av = a.value();
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(av[i]);
  return a.tape().push(a.rows(), a.cols(), std::move(y), {a}, [a, n](Tape<T>& t, std::uint32_t self) {
    const T* dy = t.grad(self).data();
    const T* yv = t.value(self).data();
    T* d = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < n; ++i) d[i] += dy[i] * (T(1) - yv[i] * yv[i]);
  });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw ShapeError("concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<T> y(r * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].value();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(v.data() + i * widths[k], widths[k], y.data() + i * total + off);
    off += widths[k];
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return parts[0].tape().push(
      r, total, std::move(y), std::span<const Var<T>>(inputs),
      [inputs, widths, r, total](Tape<T>& t, std::uint32_t self) {
        const T* dy = t.grad(self).data();
        std::size_t off = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (t.needs_grad(inputs[k].id())) {
            T* d = t.grad_buffer(inputs[k].id());
            for (std::size_t i = 0; i < r; ++i)
              for (std::size_t j = 0; j < widths[k]; ++j) d[i * widths[k] + j] += dy[i * total + off + j];
          }
          off += widths[k];
        }
      });
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t total_rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ShapeError("concat_rows: column count mismatch");
    total_rows += p.rows();
  }
  std::vector<T> y;
  y.reserve(total_rows * c);
  for (const auto& p : parts) {
    auto v = p.value();
    y.insert(y.end(), v.begin(), v.end());
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return parts[0].tape().push(total_rows, c, std::move(y), std::span<const Var<T>>(inputs),
                              [inputs](Tape<T>& t, std::uint32_t self) {
                                const T* dy = t.grad(self).data();
                                std::size_t off = 0;
                                for (const auto& in : inputs) {
                                  const std::size_t n = in.size();
                                  if (t.needs_grad(in.id())) {
                                    T* d = t.grad_buffer(in.id());
                                    for (std::size_t i = 0; i < n; ++i) d[i] += dy[off + i];
                                  }
                                  off += n;
                                }
                              });
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t start, std::size_t len) {
  const std::size_t r = a.rows(), c = a.cols();
  if (len == 0 || start + len > c) throw ShapeError("slice_cols: range out of bounds");
  std::vector<T> y(r * len);
  auto av = a.value();
  for (std::size_t i = 0; i < r; ++i) std::copy_n(av.data() + i * c + start, len, y.data() + i * len);
  return a.tape().push(r, len, std::move(y), {a}, [a, r, c, start, len](Tape<T>& t, std::uint32_t self) {
    const T* dy = t.grad(self).data();
    T* d = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < len; ++j) d[i * c + start + j] += dy[i * len + j];
  });
}

template <typename T>
Var<T> row(Var<T> a, std::size_t index) {
  const std::size_t c = a.cols();
  if (index >= a.rows()) throw ShapeError("row: index out of range");
  auto av = a.value();
  std::vector<T> y(av.begin() + index * c, av.begin() + (index + 1) * c);
  return a.tape().push(1, c, std::move(y), {a}, [a, c, index](Tape<T>& t, std::uint32_t self) {
    const T* dy = t.grad(self).data();
    T* d = t.grad_buffer(a.id()) + index * c;
    for (std::size_t j = 0; j < c; ++j) d[j] += dy[j];
  });
}

template <typename T>
Var<T> repeat_rows(Var<T> a, std::size_t times) {
  if (a.rows() != 1) throw ShapeError("repeat_rows: expects a single row");
  if (times == 0) throw ShapeError("repeat_rows: zero repetitions");
  const std::size_t c = a.cols();
  std::vector<T> y;
  y.reserve(times * c);
  auto av = a.value();
  for (std::size_t i = 0; i < times; ++i) y.insert(y.end(), av.begin(), av.end());
  return a.tape().push(times, c, std::move(y), {a}, [a, c, times](Tape<T>& t, std::uint32_t self) {
    const T* dy = t.grad(self).data();
    T* d = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < times; ++i)
      for (std::size_t j = 0; j < c; ++j) d[j] += dy[i * c + j];
  });
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::int32_t> ids) {
  const std::size_t c = table.cols(), n_rows = table.rows();
  if (ids.empty()) throw ShapeError("gather_rows: no ids");
  std::vector<T> y(ids.size() * c);
  auto tv = table.value();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= n_rows) {
      throw ShapeError("gather_rows: id " + std::to_string(ids[i]) + " out of range");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * c, c, y.data() + i * c);
  }
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  return table.tape().push(idx.size(), c, std::move(y), {table},
                           [table, idx, c](Tape<T>& t, std::uint32_t self) {
                             const T* dy = t.grad(self).data();
                             T* d = t.grad_buffer(table.id());
                             for (std::size_t i = 0; i < idx.size(); ++i) {
                               T* dr = d + static_cast<std::size_t>(idx[i]) * c;
                               for (std::size_t j = 0; j < c; ++j) dr[j] += dy[i * c + j];
                             }
                           });
}

template <typename T>
Var<T> softmax(Var<T> a) {
  const std::size_t n = a.size();
  auto av = a.value();
  const T m = *std::max_element(av.begin(), av.end());
  std::vector<T> y(n);
  T z = 0;
  for (std::size_t i = 0; i < n; ++i) z += (y[i] = std::exp(av[i] - m));
  for (auto& v : y) v /= z;
  return a.tape().push(a.rows(), a.cols(), std::move(y), {a}, [a, n](Tape<T>& t, std::uint32_t self) {
    const T* dy = t.grad(self).data();
    const T* yv = t.value(self).data();
    T dot = 0;
    for (std::size_t i = 0; i < n; ++i) dot += yv[i] * dy[i];
    T* d = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < n; ++i) d[i] += yv[i] * (dy[i] - dot);
  });
}

template <typename T>
Var<T> weighted_sum(Var<T> w, Var<T> keys) {
  const std::size_t l = keys.rows(), h = keys.cols();
  if (w.size() != l) throw ShapeError("weighted_sum: weight count does not match key count");
  const auto& k = kernels::active<T>();
  std::vector<T> y(h, T(0));
  auto wv = w.value();
  auto kv = keys.value();
  for (std::size_t i = 0; i < l; ++i) k.axpy(wv[i], kv.data() + i * h, y.data(), h);
  return w.tape().push(1, h, std::move(y), {w, keys}, [w, keys, l, h](Tape<T>& t, std::uint32_t self) {
    const auto& k = kernels::active<T>();
    const T* dy = t.grad(self).data();
    const T* wv = t.value(w.id()).data();
    const T* kv = t.value(keys.id()).data();
    if (t.needs_grad(w.id())) {
      T* d = t.grad_buffer(w.id());
      for (std::size_t i = 0; i < l; ++i) d[i] += k.dot(kv + i * h, dy, h);
    }
    if (t.needs_grad(keys.id())) {
      T* d = t.grad_buffer(keys.id());
      for (std::size_t i = 0; i < l; ++i) k.axpy(wv[i], dy, d + i * h, h);
    }
  });
}

template <typename T>
Var<T> additive_scores(Var<T> projected_keys, Var<T> projected_query, Var<T> v) {
  const std::size_t l = projected_keys.rows(), a = projected_keys.cols();
  if (projected_query.rows() != 1 || projected_query.cols() != a || v.size() != a) {
    throw ShapeError("additive_scores: attention dimensions disagree");
  }
  auto kv = projected_keys.value();
  auto qv = projected_query.value();
  auto vv = v.value();
  std::vector<T> act(l * a);
  std::vector<T> y(l);
  for (std::size_t i = 0; i < l; ++i) {
    T s = 0;
    for (std::size_t j = 0; j < a; ++j) {
      const T th = std::tanh(kv[i * a + j] + qv[j]);
      act[i * a + j] = th;
      s += vv[j] * th;
    }
    y[i] = s;
  }
  return projected_keys.tape().push(
      l, 1, std::move(y), {projected_keys, projected_query, v},
      [projected_keys, projected_query, v, l, a, act = std::move(act)](Tape<T>& t, std::uint32_t self) {
        const T* dy = t.grad(self).data();
        const T* vv = t.value(v.id()).data();
        const bool gk = t.needs_grad(projected_keys.id());
        const bool gq = t.needs_grad(projected_query.id());
        const bool gv = t.needs_grad(v.id());
        T* dk = gk ? t.grad_buffer(projected_keys.id()) : nullptr;
        T* dq = gq ? t.grad_buffer(projected_query.id()) : nullptr;
        T* dv = gv ? t.grad_buffer(v.id()) : nullptr;
        for (std::size_t i = 0; i < l; ++i) {
          const T g = dy[i];
          if (g == T(0)) continue;
          for (std::size_t j = 0; j < a; ++j) {
            const T th = act[i * a + j];
            if (gv) dv[j] += g * th;
            const T da = g * vv[j] * (T(1) - th * th);
            if (gk) dk[i * a + j] += da;
            if (gq) dq[j] += da;
          }
        }
      });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T s = 0;
  for (T v : a.value()) s += v;
  const std::size_t n = a.size();
  return a.tape().push(1, 1, {s}, {a}, [a, n](Tape<T>& t, std::uint32_t self) {
    const T g = t.grad(self)[0];
    T* d = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < n; ++i) d[i] += g;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Var<T> gru_gates(Var<T> gx, Var<T> gh, Var<T> h) {
  const std::size_t r = h.rows(), hd = h.cols();
  if (gx.rows() != r || gh.rows() != r || gx.cols() != 3 * hd || gh.cols() != 3 * hd) {
    throw ShapeError("gru_gates: pre-activation widths must be 3x the hidden size");
  }
  auto x = gx.value(), u = gh.value(), hv = h.value();
  std::vector<T> y(r * hd);
  for (std::size_t i = 0; i < r; ++i) {
    const T* xr = x.data() + i * 3 * hd;
    const T* ur = u.data() + i * 3 * hd;
    for (std::size_t j = 0; j < hd; ++j) {
      const T z = stable_sigmoid(xr[j] + ur[j]);
      const T rg = stable_sigmoid(xr[hd + j] + ur[hd + j]);
      const T n = std::tanh(xr[2 * hd + j] + rg * ur[2 * hd + j]);
      y[i * hd + j] = (T(1) - z) * n + z * hv[i * hd + j];
    }
  }
  return h.tape().push(r, hd, std::move(y), {gx, gh, h}, [gx, gh, h, r, hd](Tape<T>& t, std::uint32_t self) {
    const T* dy = t.grad(self).data();
    const T* x = t.value(gx.id()).data();
    const T* u = t.value(gh.id()).data();
    const T* hv = t.value(h.id()).data();
    T* dx = t.needs_grad(gx.id()) ? t.grad_buffer(gx.id()) : nullptr;
    T* du = t.needs_grad(gh.id()) ? t.grad_buffer(gh.id()) : nullptr;
    T* dh = t.needs_grad(h.id()) ? t.grad_buffer(h.id()) : nullptr;
    for (std::size_t i = 0; i < r; ++i) {
      const T* xr = x + i * 3 * hd;
      const T* ur = u + i * 3 * hd;
      for (std::size_t j = 0; j < hd; ++j) {
        const T g = dy[i * hd + j];
        if (g == T(0)) continue;
        const T z = stable_sigmoid(xr[j] + ur[j]);
        const T rg = stable_sigmoid(xr[hd + j] + ur[hd + j]);
        const T n = std::tanh(xr[2 * hd + j] + rg * ur[2 * hd + j]);
        const T hp = hv[i * hd + j];
        const T dn = g * (T(1) - z);
        const T dz = g * (hp - n);
        const T dan = dn * (T(1) - n * n);
        const T dr = dan * ur[2 * hd + j];
        const T daz = dz * z * (T(1) - z);
        const T dar = dr * rg * (T(1) - rg);
        if (dh) dh[i * hd + j] += g * z;
        if (dx) {
          T* dxr = dx + i * 3 * hd;
          dxr[j] += daz;
          dxr[hd + j] += dar;
          dxr[2 * hd + j] += dan;
        }
        if (du) {
          T* dur = du + i * 3 * hd;
          dur[j] += daz;
          dur[hd + j] += dar;
          dur[2 * hd + j] += dan * rg;
        }
      }
    }
  });
}

template <typename T>
Var<T> copy_combine(Var<T> gen_scores, Var<T> copy_scores, std::span<const std::int32_t> alignment,
                    std::size_t out_size) {
  const std::size_t v = gen_scores.size();
  const std::size_t s = copy_scores.valid() ? copy_scores.size() : 0;
  if (s != alignment.size()) throw ShapeError("copy_combine: copy scores and alignment differ in length");
  if (v > out_size) throw ShapeError("copy_combine: output smaller than generation vocabulary");
  for (std::int32_t id : alignment) {
    if (id < 0 || static_cast<std::size_t>(id) >= out_size) {
      throw ShapeError("copy_combine: alignment id out of range");
    }
  }
  auto gv = gen_scores.value();
  const std::span<const T> cv = s ? copy_scores.value() : std::span<const T>{};
  T m = -std::numeric_limits<T>::infinity();
  for (T x : gv) m = std::max(m, x);
  for (T x : cv) m = std::max(m, x);
  std::vector<T> q(v + s);
  T z = 0;
  for (std::size_t i = 0; i < v; ++i) z += (q[i] = std::exp(gv[i] - m));
  for (std::size_t i = 0; i < s; ++i) z += (q[v + i] = std::exp(cv[i] - m));
  for (auto& x : q) x /= z;
  std::vector<T> p(out_size, T(0));
  std::copy_n(q.begin(), v, p.begin());
  for (std::size_t i = 0; i < s; ++i) p[static_cast<std::size_t>(alignment[i])] += q[v + i];
  std::vector<std::int32_t> align(alignment.begin(), alignment.end());
  std::vector<Var<T>> inputs{gen_scores};
  if (s > 0) inputs.push_back(copy_scores);
  return gen_scores.tape().push(
      1, out_size, std::move(p), std::span<const Var<T>>(inputs),
      [gen_scores, copy_scores, v, s, q = std::move(q), align = std::move(align)](Tape<T>& t,
                                                                                  std::uint32_t self) {
        const T* dp = t.grad(self).data();
        T dot = 0;
        for (std::size_t i = 0; i < v; ++i) dot += q[i] * dp[i];
        for (std::size_t i = 0; i < s; ++i) dot += q[v + i] * dp[align[i]];
        if (t.needs_grad(gen_scores.id())) {
          T* d = t.grad_buffer(gen_scores.id());
          for (std::size_t i = 0; i < v; ++i) d[i] += q[i] * (dp[i] - dot);
        }
        if (s > 0 && t.needs_grad(copy_scores.id())) {
          T* d = t.grad_buffer(copy_scores.id());
          for (std::size_t i = 0; i < s; ++i) d[i] += q[v + i] * (dp[align[i]] - dot);
        }
      });
}

template <typename T>
Var<T> nll(Var<T> probs, std::int32_t target, bool* clamped) {
  if (target < 0 || static_cast<std::size_t>(target) >= probs.size()) {
    throw ShapeError("nll: target id out of range");
  }
  const T p = probs.value()[static_cast<std::size_t>(target)];
  const bool floor_hit = !(p > static_cast<T>(kProbabilityFloor));
  if (clamped) *clamped = floor_hit;
  const T loss = -std::log(floor_hit ? static_cast<T>(kProbabilityFloor) : p);
  return probs.tape().push(1, 1, {loss}, {probs}, [probs, target, p, floor_hit](Tape<T>& t, std::uint32_t self) {
    if (floor_hit) return;
    const T g = t.grad(self)[0];
    t.grad_buffer(probs.id())[target] += -g / p;
  });
}

template <typename T>
Var<T> bce_with_logits(Var<T> logits, std::span<const T> targets) {
  const std::size_t n = logits.size();
  if (targets.size() != n) throw ShapeError("bce_with_logits: target count mismatch");
  auto lv = logits.value();
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T x = lv[i];
    total += std::max(x, T(0)) - targets[i] * x + std::log1p(std::exp(-std::abs(x)));
  }
  total /= static_cast<T>(n);
  std::vector<T> z(targets.begin(), targets.end());
  return logits.tape().push(1, 1, {total}, {logits}, [logits, n, z = std::move(z)](Tape<T>& t, std::uint32_t self) {
    const T g = t.grad(self)[0] / static_cast<T>(n);
    const T* lv = t.value(logits.id()).data();
    T* d = t.grad_buffer(logits.id());
    for (std::size_t i = 0; i < n; ++i) d[i] += g * (stable_sigmoid(lv[i]) - z[i]);
  });
}

template <typename T>
Var<T> dropout(Var<T> a, double rate, bool training, std::mt19937_64& rng) {
  if (!(rate >= 0.0) || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return a;
  const std::size_t n = a.size();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(n);
  for (auto& m : mask) m = u(rng) < rate ? T(0) : keep_scale;
  std::vector<T> y(n);
  auto av = a.value();
  for (std::size_t i = 0; i < n; ++i) y[i] = av[i] * mask[i];
  return a.tape().push(a.rows(), a.cols(), std::move(y), {a}, [a, n, mask = std::move(mask)](Tape<T>& t, std::uint32_t self) {
    const T* dy = t.grad(self).data();
    T* d = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < n; ++i) d[i] += dy[i] * mask[i];
  });
}

#define FSDM_INSTANTIATE_OPS(T)                                                                  \
  template Var<T> linear(Var<T>, Var<T>);                                                        \
  template Var<T> add(Var<T>, Var<T>);                                                           \
  template Var<T> sub(Var<T>, Var<T>);                                                           \
  template Var<T> mul(Var<T>, Var<T>);                                                           \
  template Var<T> add_row(Var<T>, Var<T>);                                                       \
  template Var<T> scale(Var<T>, T);                                                              \
  template Var<T> one_minus(Var<T>);                                                             \
  template Var<T> sigmoid(Var<T>);                                                               \
  template Var<T> tanh(Var<T>);                                                                  \
  template Var<T> concat_cols(std::span<const Var<T>>);                                          \
  template Var<T> concat_rows(std::span<const Var<T>>);                                          \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                                  \
  template Var<T> row(Var<T>, std::size_t);                                                      \
  template Var<T> repeat_rows(Var<T>, std::size_t);                                              \
  template Var<T> gather_rows(Var<T>, std::span<const std::int32_t>);                            \
  template Var<T> softmax(Var<T>);                                                               \
  template Var<T> weighted_sum(Var<T>, Var<T>);                                                  \
  template Var<T> additive_scores(Var<T>, Var<T>, Var<T>);                                       \
  template Var<T> sum(Var<T>);                                                                   \
  template Var<T> mean(Var<T>);                                                                  \
  template Var<T> gru_gates(Var<T>, Var<T>, Var<T>);                                             \
  template Var<T> copy_combine(Var<T>, Var<T>, std::span<const std::int32_t>, std::size_t);      \
  template Var<T> nll(Var<T>, std::int32_t, bool*);                                              \
  template Var<T> bce_with_logits(Var<T>, std::span<const T>);                                   \
  template Var<T> dropout(Var<T>, double, bool, std::mt19937_64&);

FSDM_INSTANTIATE_OPS(float)
FSDM_INSTANTIATE_OPS(double)

}  // namespace fsdm::numcore
