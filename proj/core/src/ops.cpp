#include "ponita/ops.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/SpecialFunctions>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ponita::ad {

namespace {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using CMap = Eigen::Map<const MatR<T>>;
template <class T>
using MMap = Eigen::Map<MatR<T>>;

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

struct Broadcast {
  Shape out;
  std::vector<std::size_t> sa, sb;
};

std::vector<std::size_t> strides_of(const Shape& padded, const Shape& out) {
  std::vector<std::size_t> s(padded.size(), 0);
  std::size_t stride = 1;
  for (std::size_t i = padded.size(); i-- > 0;) {
    s[i] = (padded[i] == 1 && out[i] != 1) ? 0 : stride;
    stride *= padded[i];
  }
  return s;
}

Broadcast plan(const char* op, const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape pa(r, 1), pb(r, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(r - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(r - b.size()));
  Broadcast p;
  p.out.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (pa[i] == pb[i] || pb[i] == 1) {
      p.out[i] = pa[i];
    } else if (pa[i] == 1) {
      p.out[i] = pb[i];
    } else {
      shape_mismatch(op, a, b);
    }
  }
  p.sa = strides_of(pa, p.out);
  p.sb = strides_of(pb, p.out);
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <class F>
void for_each(const Broadcast& p, F&& f) {
  const std::size_t r = p.out.size();
  if (r == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t total = numel(p.out);
  if (total == 0) return;
  const std::size_t inner = p.out[r - 1];
  const std::size_t ia = p.sa[r - 1], ib = p.sb[r - 1];
  const std::size_t outer = total / inner;
  std::vector<std::size_t> ctr(r - 1, 0);
  std::size_t oa = 0, ob = 0, io = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < inner; ++k) f(io++, oa + k * ia, ob + k * ib);
    for (std::size_t d = r - 1; d-- > 0;) {
      ++ctr[d];
      oa += p.sa[d];
      ob += p.sb[d];
      if (ctr[d] < p.out[d]) break;
      oa -= p.sa[d] * p.out[d];
      ob -= p.sb[d] * p.out[d];
      ctr[d] = 0;
    }
  }
}

enum class BinOp { Add, Sub, Mul, Div };

template <class T>
Var<T> binary(const char* name, BinOp op, const Var<T>& a, const Var<T>& b) {
  const Array<T>& av = a.value();
  const Array<T>& bv = b.value();
  Broadcast p;
  if (av.shape == bv.shape) {
    p.out = av.shape;
  } else {
    p = plan(name, av.shape, bv.shape);
  }
  Array<T> out(p.out);
  const T* x = av.data.data();
  const T* y = bv.data.data();
  T* z = out.data.data();
  const bool same = av.shape == bv.shape;
  // b repeated along the leading axes of a, e.g. a [R, C] with a bias [C].
  const bool rows = !same && p.out == av.shape && bv.size() > 0 && av.size() % bv.size() == 0 &&
                    std::equal(bv.shape.rbegin(), bv.shape.rend(), av.shape.rbegin());
  const std::size_t width = bv.size();
  auto compute = [&](auto&& fn) {
    if (same) {
      for (std::size_t i = 0; i < out.size(); ++i) z[i] = fn(x[i], y[i]);
    } else if (rows) {
      for (std::size_t r = 0; r < out.size(); r += width) {
        for (std::size_t c = 0; c < width; ++c) z[r + c] = fn(x[r + c], y[c]);
      }
    } else {
      for_each(p, [&](std::size_t io, std::size_t i, std::size_t j) { z[io] = fn(x[i], y[j]); });
    }
  };
  switch (op) {
    case BinOp::Add: compute([](T u, T v) { return u + v; }); break;
    case BinOp::Sub: compute([](T u, T v) { return u - v; }); break;
    case BinOp::Mul: compute([](T u, T v) { return u * v; }); break;
    case BinOp::Div: compute([](T u, T v) { return u / v; }); break;
  }
  const std::size_t ida = a.id(), idb = b.id();
  return a.tape().record(std::move(out), {a, b}, [ida, idb, op, p, same, rows, width](Tape<T>& t, const Array<T>& g) {
    Array<T>* ga = t.grad_sink(ida);
    Array<T>* gb = t.grad_sink(idb);
    const T* x = t.value(ida).data.data();
    const T* y = t.value(idb).data.data();
    T* dx = ga ? ga->data.data() : nullptr;
    T* dy = gb ? gb->data.data() : nullptr;
    const T* dz = g.data.data();
    auto visit = [&](auto&& fn) {
      if (same) {
        for (std::size_t i = 0; i < g.size(); ++i) fn(i, i, i);
      } else if (rows) {
        for (std::size_t r = 0; r < g.size(); r += width) {
          for (std::size_t c = 0; c < width; ++c) fn(r + c, r + c, c);
        }
      } else {
        for_each(p, fn);
      }
    };
    switch (op) {
      case BinOp::Add:
        visit([&](std::size_t io, std::size_t i, std::size_t j) {
          if (dx) dx[i] += dz[io];
          if (dy) dy[j] += dz[io];
        });
        break;
      case BinOp::Sub:
        visit([&](std::size_t io, std::size_t i, std::size_t j) {
          if (dx) dx[i] += dz[io];
          if (dy) dy[j] -= dz[io];
        });
        break;
      case BinOp::Mul:
        visit([&](std::size_t io, std::size_t i, std::size_t j) {
          if (dx) dx[i] += dz[io] * y[j];
          if (dy) dy[j] += dz[io] * x[i];
        });
        break;
      case BinOp::Div:
        visit([&](std::size_t io, std::size_t i, std::size_t j) {
          if (dx) dx[i] += dz[io] / y[j];
          if (dy) dy[j] -= dz[io] * x[i] / (y[j] * y[j]);
        });
        break;
    }
  });
}

// y = f(x) elementwise; df(x, y) is the derivative.
template <class T, class F, class DF>
Var<T> elementwise(const Var<T>& a, F f, DF df, bool keep_output = false) {
  const Array<T>& av = a.value();
  Array<T> out(av.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = f(av.data[i]);
  const std::size_t ida = a.id();
  Array<T> saved = keep_output ? out : Array<T>();
  return a.tape().record(std::move(out), {a}, [ida, df, keep_output, saved = std::move(saved)](Tape<T>& t, const Array<T>& g) {
    Array<T>* ga = t.grad_sink(ida);
    if (ga == nullptr) return;
    const auto& x = t.value(ida).data;
    for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += g.data[i] * df(x[i], keep_output ? saved.data[i] : T(0));
  });
}

Shape reduce_shape(const Shape& s, std::size_t axis, bool keepdim) {
  Shape out = s;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return out;
}

void outer_inner(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary("add", BinOp::Add, a, b);
}
template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary("sub", BinOp::Sub, a, b);
}
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary("mul", BinOp::Mul, a, b);
}
template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return binary("div", BinOp::Div, a, b);
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  return elementwise(a, [s](T x) { return s * x; }, [s](T, T) { return s; });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return elementwise(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.empty() || bs.size() != 2 || as.back() != bs[0]) shape_mismatch("matmul", as, bs);
  const std::size_t k = bs[0], m = bs[1];
  const std::size_t rows = k == 0 ? 0 : a.size() / k;
  Shape os = as;
  os.back() = m;
  Array<T> out(os);
  if (rows > 0 && m > 0) {
    MMap<T>(out.data.data(), rows, m).noalias() =
        CMap<T>(a.value().data.data(), rows, k) * CMap<T>(b.value().data.data(), k, m);
  }
  const std::size_t ida = a.id(), idb = b.id();
  return a.tape().record(std::move(out), {a, b}, [ida, idb, rows, k, m](Tape<T>& t, const Array<T>& g) {
    if (rows == 0 || m == 0) return;
    CMap<T> dz(g.data.data(), rows, m);
    if (Array<T>* ga = t.grad_sink(ida)) {
      MMap<T>(ga->data.data(), rows, k).noalias() += dz * CMap<T>(t.value(idb).data.data(), k, m).transpose();
    }
    if (Array<T>* gb = t.grad_sink(idb)) {
      MMap<T>(gb->data.data(), k, m).noalias() += CMap<T>(t.value(ida).data.data(), rows, k).transpose() * dz;
    }
  });
}

template <class T>
Var<T> linear(const Var<T>& a, const Var<T>& w, const Var<T>& bias) {
  const Shape& as = a.shape();
  const Shape& ws = w.shape();
  if (as.empty() || ws.size() != 2 || as.back() != ws[0]) shape_mismatch("linear", as, ws);
  const std::size_t k = ws[0], m = ws[1];
  if (bias.shape() != Shape{m}) shape_mismatch("linear", ws, bias.shape());
  const std::size_t rows = k == 0 ? 0 : a.size() / k;
  Shape os = as;
  os.back() = m;
  Array<T> out(os);
  if (rows > 0 && m > 0) {
    MMap<T> o(out.data.data(), rows, m);
    o.rowwise() = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value().data.data(), m);
    o.noalias() += CMap<T>(a.value().data.data(), rows, k) * CMap<T>(w.value().data.data(), k, m);
  }
  const std::size_t ida = a.id(), idw = w.id(), idb = bias.id();
  return a.tape().record(std::move(out), {a, w, bias}, [=](Tape<T>& t, const Array<T>& g) {
    if (rows == 0 || m == 0) return;
    CMap<T> dz(g.data.data(), rows, m);
    if (Array<T>* ga = t.grad_sink(ida)) {
      MMap<T>(ga->data.data(), rows, k).noalias() += dz * CMap<T>(t.value(idw).data.data(), k, m).transpose();
    }
    if (Array<T>* gw = t.grad_sink(idw)) {
      MMap<T>(gw->data.data(), k, m).noalias() += CMap<T>(t.value(ida).data.data(), rows, k).transpose() * dz;
    }
    if (Array<T>* gb = t.grad_sink(idb)) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb->data.data(), m) += dz.colwise().sum();
    }
  });
}

template <class T>
Var<T> edge_message_sum(const Var<T>& k, const Var<T>& f, const Index& receivers, const Index& senders,
                        std::size_t num_nodes) {
  const Shape& ks = k.shape();
  const Shape& fs = f.shape();
  const std::size_t e = receivers.size();
  if (senders.size() != e || ks.empty() || fs.empty() || ks[0] != e ||
      !std::equal(ks.begin() + 1, ks.end(), fs.begin() + 1, fs.end()) || fs[0] != num_nodes) {
    shape_mismatch("edge_message_sum", ks, fs);
  }
  const std::size_t width = numel(Shape(ks.begin() + 1, ks.end()));
  Shape os = fs;
  Array<T> out(os);
  const T* kv = k.value().data.data();
  const T* fv = f.value().data.data();
  for (std::size_t q = 0; q < e; ++q) {
    if (receivers[q] >= num_nodes || senders[q] >= num_nodes) throw std::out_of_range("edge_message_sum: bad index");
    T* __restrict o = out.data.data() + receivers[q] * width;
    const T* __restrict kk = kv + q * width;
    const T* __restrict ff = fv + senders[q] * width;
    for (std::size_t c = 0; c < width; ++c) o[c] += kk[c] * ff[c];
  }
  const std::size_t idk = k.id(), idf = f.id();
  return k.tape().record(std::move(out), {k, f}, [=](Tape<T>& t, const Array<T>& g) {
    Array<T>* gk = t.grad_sink(idk);
    Array<T>* gf = t.grad_sink(idf);
    const T* kv = t.value(idk).data.data();
    const T* fv = t.value(idf).data.data();
    for (std::size_t q = 0; q < e; ++q) {
      const T* __restrict dz = g.data.data() + receivers[q] * width;
      if (gk) {
        T* __restrict dk = gk->data.data() + q * width;
        const T* __restrict ff = fv + senders[q] * width;
        for (std::size_t c = 0; c < width; ++c) dk[c] += dz[c] * ff[c];
      }
      if (gf) {
        T* __restrict df = gf->data.data() + senders[q] * width;
        const T* __restrict kk = kv + q * width;
        for (std::size_t c = 0; c < width; ++c) df[c] += dz[c] * kk[c];
      }
    }
  });
}

template <class T>
Var<T> bmm(const Var<T>& a, const Var<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 3 || bs.size() != 3 || as[2] != bs[1]) shape_mismatch("bmm", as, bs);
  const std::size_t ba = as[0], bb = bs[0];
  const std::size_t batch = std::max(ba, bb);
  if ((ba != batch && ba != 1) || (bb != batch && bb != 1)) shape_mismatch("bmm", as, bs);
  const std::size_t m = as[1], k = as[2], n = bs[2];
  Array<T> out(Shape{batch, m, n});
  const T* x = a.value().data.data();
  const T* y = b.value().data.data();
  for (std::size_t i = 0; i < batch; ++i) {
    MMap<T>(out.data.data() + i * m * n, m, n).noalias() =
        CMap<T>(x + (ba == 1 ? 0 : i) * m * k, m, k) * CMap<T>(y + (bb == 1 ? 0 : i) * k * n, k, n);
  }
  const std::size_t ida = a.id(), idb = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape<T>& t, const Array<T>& g) {
    Array<T>* ga = t.grad_sink(ida);
    Array<T>* gb = t.grad_sink(idb);
    const T* x = t.value(ida).data.data();
    const T* y = t.value(idb).data.data();
    for (std::size_t i = 0; i < batch; ++i) {
      CMap<T> dz(g.data.data() + i * m * n, m, n);
      const std::size_t oa = (ba == 1 ? 0 : i) * m * k;
      const std::size_t ob = (bb == 1 ? 0 : i) * k * n;
      if (ga) MMap<T>(ga->data.data() + oa, m, k).noalias() += dz * CMap<T>(y + ob, k, n).transpose();
      if (gb) MMap<T>(gb->data.data() + ob, k, n).noalias() += CMap<T>(x + oa, m, k).transpose() * dz;
    }
  });
}

template <class T>
Var<T> contract_channelwise(const Var<T>& kern, const Var<T>& f) {
  const Shape& ks = kern.shape();
  const Shape& fs = f.shape();
  if (ks.size() != 3 || fs.size() != 3 || ks[1] != fs[1] || ks[2] != fs[2]) {
    shape_mismatch("contract_channelwise", ks, fs);
  }
  const std::size_t na = ks[0], nb = ks[1], nc = ks[2], np = fs[0];
  Array<T> out(Shape{np, na, nc});
  const T* kv = kern.value().data.data();
  const T* fv = f.value().data.data();
  T* ov = out.data.data();
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t a = 0; a < na; ++a) {
      T* o = ov + (p * na + a) * nc;
      for (std::size_t b = 0; b < nb; ++b) {
        const T* kk = kv + (a * nb + b) * nc;
        const T* ff = fv + (p * nb + b) * nc;
        for (std::size_t c = 0; c < nc; ++c) o[c] += kk[c] * ff[c];
      }
    }
  }
  const std::size_t idk = kern.id(), idf = f.id();
  return kern.tape().record(std::move(out), {kern, f}, [=](Tape<T>& t, const Array<T>& g) {
    Array<T>* gk = t.grad_sink(idk);
    Array<T>* gf = t.grad_sink(idf);
    const T* kv = t.value(idk).data.data();
    const T* fv = t.value(idf).data.data();
    for (std::size_t p = 0; p < np; ++p) {
      for (std::size_t a = 0; a < na; ++a) {
        const T* dz = g.data.data() + (p * na + a) * nc;
        for (std::size_t b = 0; b < nb; ++b) {
          const std::size_t ko = (a * nb + b) * nc;
          const std::size_t fo = (p * nb + b) * nc;
          if (gk) {
            T* dk = gk->data.data() + ko;
            for (std::size_t c = 0; c < nc; ++c) dk[c] += dz[c] * fv[fo + c];
          }
          if (gf) {
            T* df = gf->data.data() + fo;
            for (std::size_t c = 0; c < nc; ++c) df[c] += dz[c] * kv[ko + c];
          }
        }
      }
    }
  });
}

template <class T>
Var<T> gather(const Var<T>& x, const Index& idx) {
  const Shape& xs = x.shape();
  if (xs.empty()) throw ShapeError("gather: needs rank >= 1, got " + shape_string(xs));
  const std::size_t rows = xs[0];
  const std::size_t width = rows == 0 ? numel(Shape(xs.begin() + 1, xs.end())) : x.size() / rows;
  Shape os = xs;
  os[0] = idx.size();
  Array<T> out(os);
  const T* xv = x.value().data.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) {
      throw std::out_of_range("gather: index " + std::to_string(idx[r]) + " out of range for shape " + shape_string(xs));
    }
    std::copy_n(xv + idx[r] * width, width, out.data.data() + r * width);
  }
  const std::size_t idx_id = x.id();
  return x.tape().record(std::move(out), {x}, [idx_id, idx, width](Tape<T>& t, const Array<T>& g) {
    Array<T>* gx = t.grad_sink(idx_id);
    if (!gx) return;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      T* dst = gx->data.data() + idx[r] * width;
      const T* src = g.data.data() + r * width;
      for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
    }
  });
}

template <class T>
Var<T> segment_sum(const Var<T>& x, const Index& seg, std::size_t num_segments) {
  const Shape& xs = x.shape();
  if (xs.empty() || xs[0] != seg.size()) {
    throw ShapeError("segment_sum: " + std::to_string(seg.size()) + " segment ids for shape " + shape_string(xs));
  }
  const std::size_t width = numel(Shape(xs.begin() + 1, xs.end()));
  Shape os = xs;
  os[0] = num_segments;
  Array<T> out(os);
  const T* xv = x.value().data.data();
  for (std::size_t r = 0; r < seg.size(); ++r) {
    if (seg[r] >= num_segments) throw std::out_of_range("segment_sum: segment id out of range");
    T* dst = out.data.data() + seg[r] * width;
    const T* src = xv + r * width;
    for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
  }
  const std::size_t idx_id = x.id();
  return x.tape().record(std::move(out), {x}, [idx_id, seg, width](Tape<T>& t, const Array<T>& g) {
    Array<T>* gx = t.grad_sink(idx_id);
    if (!gx) return;
    for (std::size_t r = 0; r < seg.size(); ++r) {
      const T* src = g.data.data() + seg[r] * width;
      T* dst = gx->data.data() + r * width;
      for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
    }
  });
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  if (numel(shape) != x.size()) shape_mismatch("reshape", x.shape(), shape);
  Array<T> out;
  out.shape = std::move(shape);
  out.data = x.value().data;
  const std::size_t id = x.id();
  return x.tape().record(std::move(out), {x}, [id](Tape<T>& t, const Array<T>& g) {
    if (Array<T>* gx = t.grad_sink(id)) {
      for (std::size_t i = 0; i < g.size(); ++i) gx->data[i] += g.data[i];
    }
  });
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + shape_string(s0));
  Shape os = s0;
  os[axis] = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    if (s.size() != s0.size()) shape_mismatch("concat", s0, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) shape_mismatch("concat", s0, s);
    }
    os[axis] += s[axis];
  }
  std::size_t outer, inner;
  outer_inner(os, axis, outer, inner);
  Array<T> out(os);
  std::vector<std::size_t> widths, offsets, ids;
  std::size_t off = 0;
  for (const auto& x : xs) {
    widths.push_back(x.shape()[axis] * inner);
    offsets.push_back(off);
    off += widths.back();
    ids.push_back(x.id());
  }
  const std::size_t row = os[axis] * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < xs.size(); ++k) {
      std::copy_n(xs[k].value().data.data() + o * widths[k], widths[k], out.data.data() + o * row + offsets[k]);
    }
  }
  return xs[0].tape().record(std::move(out), xs, [=](Tape<T>& t, const Array<T>& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Array<T>* gx = t.grad_sink(ids[k]);
      if (!gx) continue;
      for (std::size_t o = 0; o < outer; ++o) {
        const T* src = g.data.data() + o * row + offsets[k];
        T* dst = gx->data.data() + o * widths[k];
        for (std::size_t c = 0; c < widths[k]; ++c) dst[c] += src[c];
      }
    }
  });
}

template <class T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& xs = x.shape();
  if (axis >= xs.size() || begin > end || end > xs[axis]) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " of shape " + shape_string(xs));
  }
  std::size_t outer, inner;
  outer_inner(xs, axis, outer, inner);
  Shape os = xs;
  os[axis] = end - begin;
  Array<T> out(os);
  const std::size_t src_row = xs[axis] * inner, dst_row = (end - begin) * inner, off = begin * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.value().data.data() + o * src_row + off, dst_row, out.data.data() + o * dst_row);
  }
  const std::size_t id = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, const Array<T>& g) {
    Array<T>* gx = t.grad_sink(id);
    if (!gx) return;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t c = 0; c < dst_row; ++c) gx->data[o * src_row + off + c] += g.data[o * dst_row + c];
    }
  });
}

template <class T>
Var<T> broadcast_to(const Var<T>& x, const Shape& shape) {
  Broadcast p = plan("broadcast_to", x.shape(), shape);
  if (p.out != shape) shape_mismatch("broadcast_to", x.shape(), shape);
  Array<T> out(shape);
  const T* xv = x.value().data.data();
  for_each(p, [&](std::size_t io, std::size_t i, std::size_t) { out.data[io] = xv[i]; });
  const std::size_t id = x.id();
  return x.tape().record(std::move(out), {x}, [id, p](Tape<T>& t, const Array<T>& g) {
    Array<T>* gx = t.grad_sink(id);
    if (!gx) return;
    for_each(p, [&](std::size_t io, std::size_t i, std::size_t) { gx->data[i] += g.data[io]; });
  });
}

template <class T>
Var<T> transpose_last(const Var<T>& x) {
  const Shape& xs = x.shape();
  if (xs.size() < 2) throw ShapeError("transpose_last: needs rank >= 2, got " + shape_string(xs));
  const std::size_t m = xs[xs.size() - 2], n = xs.back();
  const std::size_t batch = (m * n == 0) ? 0 : x.size() / (m * n);
  Shape os = xs;
  std::swap(os[os.size() - 2], os.back());
  Array<T> out(os);
  for (std::size_t b = 0; b < batch; ++b) {
    MMap<T>(out.data.data() + b * m * n, n, m) = CMap<T>(x.value().data.data() + b * m * n, m, n).transpose();
  }
  const std::size_t id = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, const Array<T>& g) {
    Array<T>* gx = t.grad_sink(id);
    if (!gx) return;
    for (std::size_t b = 0; b < batch; ++b) {
      MMap<T>(gx->data.data() + b * m * n, m, n) += CMap<T>(g.data.data() + b * m * n, n, m).transpose();
    }
  });
}

template <class T>
Var<T> sum(const Var<T>& x, std::size_t axis, bool keepdim) {
  const Shape& xs = x.shape();
  if (axis >= xs.size()) throw ShapeError("sum: axis out of range for " + shape_string(xs));
  std::size_t outer, inner;
  outer_inner(xs, axis, outer, inner);
  const std::size_t n = xs[axis];
  Array<T> out(reduce_shape(xs, axis, keepdim));
  const T* xv = x.value().data.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      const T* src = xv + (o * n + k) * inner;
      T* dst = out.data.data() + o * inner;
      for (std::size_t c = 0; c < inner; ++c) dst[c] += src[c];
    }
  }
  const std::size_t id = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, const Array<T>& g) {
    Array<T>* gx = t.grad_sink(id);
    if (!gx) return;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t k = 0; k < n; ++k) {
        T* dst = gx->data.data() + (o * n + k) * inner;
        const T* src = g.data.data() + o * inner;
        for (std::size_t c = 0; c < inner; ++c) dst[c] += src[c];
      }
    }
  });
}

template <class T>
Var<T> mean(const Var<T>& x, std::size_t axis, bool keepdim) {
  const std::size_t n = x.dim(axis);
  return scale(sum(x, axis, keepdim), n == 0 ? T(0) : T(1) / static_cast<T>(n));
}

template <class T>
Var<T> sum_all(const Var<T>& x) {
  T acc = T(0);
  for (T v : x.value().data) acc += v;
  const std::size_t id = x.id();
  return x.tape().record(Array<T>::scalar(acc), {x}, [id](Tape<T>& t, const Array<T>& g) {
    Array<T>* gx = t.grad_sink(id);
    if (!gx) return;
    const T d = g.data[0];
    for (auto& v : gx->data) v += d;
  });
}

template <class T>
Var<T> mean_all(const Var<T>& x) {
  const std::size_t n = x.size();
  return scale(sum_all(x), n == 0 ? T(0) : T(1) / static_cast<T>(n));
}

template <class T>
Var<T> relu(const Var<T>& x) {
  return elementwise(x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  return elementwise(
      x, [=](T v) { return v < lo ? lo : (v > hi ? hi : v); },
      [=](T v, T) { return v < lo || v > hi ? T(0) : T(1); });
}

template <class T>
Var<T> gelu(const Var<T>& x) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  static constexpr T inv_sqrt2 = T(0.70710678118654752440);
  static constexpr T inv_sqrt2pi = T(0.39894228040143267794);
  const Array<T>& xv = x.value();
  const auto n = static_cast<Eigen::Index>(xv.size());
  Array<T> out(xv.shape);
  Eigen::Map<const Arr> xa(xv.data.data(), n);
  // Evaluated into aligned storage: on an unaligned map Eigen sends a
  // leading, address-dependent run of elements through the scalar erf.
  const Arr y = T(0.5) * xa * (T(1) + (xa * inv_sqrt2).erf());
  std::copy(y.data(), y.data() + n, out.data.begin());
  const std::size_t id = x.id();
  return x.tape().record(std::move(out), {x}, [id, n](Tape<T>& t, const Array<T>& g) {
    Array<T>* gx = t.grad_sink(id);
    if (!gx) return;
    Eigen::Map<const Arr> xa(t.value(id).data.data(), n);
    Eigen::Map<const Arr> ga(g.data.data(), n);
    const Arr d = ga * (T(0.5) * (T(1) + (xa * inv_sqrt2).erf()) + xa * inv_sqrt2pi * (T(-0.5) * xa.square()).exp());
    Eigen::Map<Arr>(gx->data.data(), n) += d;
  });
}

template <class T>
Var<T> sqrt(const Var<T>& x) {
  return elementwise(x, [](T v) { return std::sqrt(v); }, [](T, T y) { return y > T(0) ? T(0.5) / y : T(0); }, true);
}

template <class T>
Var<T> exp(const Var<T>& x) {
  return elementwise(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; }, true);
}

template <class T>
Var<T> log(const Var<T>& x) {
  return elementwise(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Var<T> square(const Var<T>& x) {
  return elementwise(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Var<T> acos_clamped(const Var<T>& x) {
  return elementwise(
      x, [](T v) { return std::acos(std::clamp(v, T(-1), T(1))); },
      [](T v, T) { return (v > T(-1) && v < T(1)) ? T(-1) / std::sqrt(T(1) - v * v) : T(0); });
}

template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const Shape& xs = x.shape();
  if (xs.empty()) throw ShapeError("layer_norm: needs rank >= 1");
  const std::size_t c = xs.back();
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    shape_mismatch("layer_norm", xs, gamma.shape());
  }
  const std::size_t rows = c == 0 ? 0 : x.size() / c;
  Array<T> out(xs);
  Array<T> xhat(xs);
  std::vector<T> inv_std(rows);
  const T* xv = x.value().data.data();
  const T* gv = gamma.value().data.data();
  const T* bv = beta.value().data.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * c;
    T mu = T(0);
    for (std::size_t k = 0; k < c; ++k) mu += row[k];
    mu /= static_cast<T>(c);
    T var = T(0);
    for (std::size_t k = 0; k < c; ++k) var += (row[k] - mu) * (row[k] - mu);
    var /= static_cast<T>(c);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t k = 0; k < c; ++k) {
      const T h = (row[k] - mu) * is;
      xhat.data[r * c + k] = h;
      out.data[r * c + k] = h * gv[k] + bv[k];
    }
  }
  const std::size_t idx = x.id(), idg = gamma.id(), idb = beta.id();
  return x.tape().record(std::move(out), {x, gamma, beta},
                         [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, const Array<T>& g) {
                           Array<T>* gx = t.grad_sink(idx);
                           Array<T>* gg = t.grad_sink(idg);
                           Array<T>* gb = t.grad_sink(idb);
                           const T* gam = t.value(idg).data.data();
                           std::vector<T> dh(c);
                           for (std::size_t r = 0; r < rows; ++r) {
                             const T* dy = g.data.data() + r * c;
                             const T* h = xhat.data.data() + r * c;
                             T m1 = T(0), m2 = T(0);
                             for (std::size_t k = 0; k < c; ++k) {
                               if (gg) gg->data[k] += dy[k] * h[k];
                               if (gb) gb->data[k] += dy[k];
                               dh[k] = dy[k] * gam[k];
                               m1 += dh[k];
                               m2 += dh[k] * h[k];
                             }
                             if (!gx) continue;
                             m1 /= static_cast<T>(c);
                             m2 /= static_cast<T>(c);
                             T* dx = gx->data.data() + r * c;
                             for (std::size_t k = 0; k < c; ++k) dx[k] += inv_std[r] * (dh[k] - m1 - h[k] * m2);
                           }
                         });
}

#define PONITA_INSTANTIATE_OPS(T)                                                              \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> div<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> scale<T>(const Var<T>&, T);                                                  \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                             \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                           \
  template Var<T> edge_message_sum<T>(const Var<T>&, const Var<T>&, const Index&, const Index&, std::size_t); \
  template Var<T> bmm<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> contract_channelwise<T>(const Var<T>&, const Var<T>&);                       \
  template Var<T> gather<T>(const Var<T>&, const Index&);                                      \
  template Var<T> segment_sum<T>(const Var<T>&, const Index&, std::size_t);                    \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                            \
  template Var<T> concat<T>(const std::vector<Var<T>>&, std::size_t);                          \
  template Var<T> slice<T>(const Var<T>&, std::size_t, std::size_t, std::size_t);              \
  template Var<T> broadcast_to<T>(const Var<T>&, const Shape&);                                \
  template Var<T> transpose_last<T>(const Var<T>&);                                            \
  template Var<T> sum<T>(const Var<T>&, std::size_t, bool);                                    \
  template Var<T> mean<T>(const Var<T>&, std::size_t, bool);                                   \
  template Var<T> sum_all<T>(const Var<T>&);                                                   \
  template Var<T> mean_all<T>(const Var<T>&);                                                  \
  template Var<T> relu<T>(const Var<T>&);                                                      \
  template Var<T> clamp<T>(const Var<T>&, T, T);                                               \
  template Var<T> gelu<T>(const Var<T>&);                                                      \
  template Var<T> sqrt<T>(const Var<T>&);                                                      \
  template Var<T> exp<T>(const Var<T>&);                                                       \
  template Var<T> log<T>(const Var<T>&);                                                       \
  template Var<T> square<T>(const Var<T>&);                                                    \
  template Var<T> acos_clamped<T>(const Var<T>&);                                              \
  template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);

PONITA_INSTANTIATE_OPS(float)
PONITA_INSTANTIATE_OPS(double)

}  // namespace ponita::ad
