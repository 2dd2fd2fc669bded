#include "diffo/ops.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace diffo {

namespace {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Column j = (ci * k + ky) * k + kx of the (ho*wo) x (c*k*k) column-major
// matrix holds the input plane ci shifted by (ky, kx).
template <typename Scalar>
void im2col(const Scalar* in, Index c, Index h, Index w, Index k, Index stride, Index pad,
            Index ho, Index wo, Scalar* col) {
  const Index plane = ho * wo;
  for (Index ci = 0; ci < c; ++ci) {
    const Scalar* src = in + ci * h * w;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* dst = col + ((ci * k + ky) * k + kx) * plane;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          Scalar* row = dst + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + wo, Scalar(0));
            continue;
          }
          const Scalar* srow = src + iy * w;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * stride - pad + kx;
            row[ox] = (ix >= 0 && ix < w) ? srow[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const Scalar* col, Index c, Index h, Index w, Index k, Index stride, Index pad,
            Index ho, Index wo, Scalar* out) {
  const Index plane = ho * wo;
  for (Index ci = 0; ci < c; ++ci) {
    Scalar* dst = out + ci * h * w;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* src = col + ((ci * k + ky) * k + kx) * plane;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const Scalar* row = src + oy * wo;
          Scalar* drow = dst + iy * w;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) drow[ix] += row[ox];
          }
        }
      }
    }
  }
}

template <typename Scalar>
Node<Scalar>* input(Node<Scalar>& self, size_t i) {
  return self.inputs[i].get();
}

}  // namespace

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Scalar> out(a.shape(), a.value().array() + b.value().array());
  return detail::make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) in->accumulate(self.grad);
    }
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<Scalar> out(a.shape(), a.value().array() - b.value().array());
  return detail::make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    if (input(self, 0)->requires_grad) input(self, 0)->accumulate(self.grad);
    if (input(self, 1)->requires_grad) {
      input(self, 1)->accumulate(Tensor<Scalar>(self.grad.shape(), -self.grad.array()));
    }
  });
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<Scalar> out(a.shape(), a.value().array() * b.value().array());
  return detail::make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    Node<Scalar>* na = input(self, 0);
    Node<Scalar>* nb = input(self, 1);
    if (na->requires_grad) {
      na->accumulate(Tensor<Scalar>(self.grad.shape(), self.grad.array() * nb->value.array()));
    }
    if (nb->requires_grad) {
      nb->accumulate(Tensor<Scalar>(self.grad.shape(), self.grad.array() * na->value.array()));
    }
  });
}

template <typename Scalar>
Var<Scalar> operator*(std::type_identity_t<Scalar> s, const Var<Scalar>& a) {
  Tensor<Scalar> out(a.shape(), s * a.value().array());
  return detail::make_result<Scalar>(std::move(out), {a}, [s](Node<Scalar>& self) {
    self.inputs[0]->accumulate(Tensor<Scalar>(self.grad.shape(), s * self.grad.array()));
  });
}

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   Index stride, Index pad) {
  const Tensor<Scalar>& in = x.value();
  const Tensor<Scalar>& wt = weight.value();
  const Index cin = in.c();
  const Index cout = wt.n();
  const Index k = wt.h();
  if (wt.c() != cin || wt.w() != k) {
    throw ShapeError("conv2d: weight " + wt.shape().str() + " incompatible with input " +
                     in.shape().str());
  }
  const bool has_bias = static_cast<bool>(bias);
  if (has_bias && (bias.shape().c != cout || bias.shape().size() != cout)) {
    throw ShapeError("conv2d: bias shape " + bias.shape().str());
  }
  const Index ho = (in.h() + 2 * pad - k) / stride + 1;
  const Index wo = (in.w() + 2 * pad - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: input too small " + in.shape().str());

  const bool direct = k == 1 && stride == 1 && pad == 0;
  const Index ckk = cin * k * k;
  Eigen::Map<const Matrix<Scalar>> wmat(wt.data(), ckk, cout);
  Tensor<Scalar> out({in.n(), cout, ho, wo});
  Matrix<Scalar> col;
  if (!direct) col.resize(ho * wo, ckk);
  for (Index n = 0; n < in.n(); ++n) {
    auto dst = out.sample(n);
    if (direct) {
      dst.noalias() = in.sample(n) * wmat;
    } else {
      im2col(in.data() + n * in.shape().sample(), cin, in.h(), in.w(), k, stride, pad, ho, wo,
             col.data());
      dst.noalias() = col * wmat;
    }
    if (has_bias) {
      dst.rowwise() += Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(
          bias.value().data(), cout);
    }
  }

  std::vector<Var<Scalar>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return detail::make_result<Scalar>(
      std::move(out), std::move(inputs),
      [stride, pad, direct, has_bias, ho, wo](Node<Scalar>& self) {
        Node<Scalar>* nx = input(self, 0);
        Node<Scalar>* nw = input(self, 1);
        Node<Scalar>* nb = has_bias ? input(self, 2) : nullptr;
        const Tensor<Scalar>& in = nx->value;
        const Tensor<Scalar>& wt = nw->value;
        const Index cin = in.c();
        const Index cout = wt.n();
        const Index k = wt.h();
        const Index ckk = cin * k * k;
        Eigen::Map<const Matrix<Scalar>> wmat(wt.data(), ckk, cout);
        Matrix<Scalar> col;
        Matrix<Scalar> dcol;
        if (!direct) col.resize(ho * wo, ckk);
        Tensor<Scalar>* dx = nx->requires_grad ? &nx->grad_buffer() : nullptr;
        Tensor<Scalar>* dw = nw->requires_grad ? &nw->grad_buffer() : nullptr;
        Tensor<Scalar>* db = (nb && nb->requires_grad) ? &nb->grad_buffer() : nullptr;
        for (Index n = 0; n < in.n(); ++n) {
          auto g = std::as_const(self.grad).sample(n);
          if (dw) {
            Eigen::Map<Matrix<Scalar>> dwmat(dw->data(), ckk, cout);
            if (direct) {
              dwmat.noalias() += in.sample(n).transpose() * g;
            } else {
              im2col(in.data() + n * in.shape().sample(), cin, in.h(), in.w(), k, stride, pad, ho,
                     wo, col.data());
              dwmat.noalias() += col.transpose() * g;
            }
          }
          if (db) {
            Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(db->data(), cout) +=
                g.colwise().sum();
          }
          if (dx) {
            if (direct) {
              dx->sample(n).noalias() += g * wmat.transpose();
            } else {
              dcol.noalias() = g * wmat.transpose();
              col2im(dcol.data(), cin, in.h(), in.w(), k, stride, pad, ho, wo,
                     dx->data() + n * in.shape().sample());
            }
          }
        }
      });
}

template <typename Scalar>
Var<Scalar> group_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Index groups, Scalar eps) {
  const Tensor<Scalar>& in = x.value();
  const Index c = in.c();
  if (groups <= 0 || c % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(c) + " channels not divisible into " +
                     std::to_string(groups) + " groups");
  }
  if (gamma.shape().size() != c || beta.shape().size() != c) {
    throw ShapeError("group_norm: affine parameters do not match channel count");
  }
  const Index cg = c / groups;
  const Index hw = in.h() * in.w();
  const Index block = cg * hw;
  auto xhat = std::make_shared<Tensor<Scalar>>(in.shape());
  auto inv_std = std::make_shared<std::vector<Scalar>>(in.n() * groups);
  Tensor<Scalar> out(in.shape());
  const Scalar* gm = gamma.value().data();
  const Scalar* bt = beta.value().data();
  for (Index n = 0; n < in.n(); ++n) {
    for (Index g = 0; g < groups; ++g) {
      const Index offset = (n * c + g * cg) * hw;
      auto seg = in.array().segment(offset, block);
      const double mu = seg.template cast<double>().mean();
      const double var = (seg.template cast<double>() - mu).square().mean();
      const Scalar istd = static_cast<Scalar>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      (*inv_std)[n * groups + g] = istd;
      xhat->array().segment(offset, block) = (seg - static_cast<Scalar>(mu)) * istd;
      for (Index ci = 0; ci < cg; ++ci) {
        const Index ch = g * cg + ci;
        out.array().segment(offset + ci * hw, hw) =
            xhat->array().segment(offset + ci * hw, hw) * gm[ch] + bt[ch];
      }
    }
  }
  return detail::make_result<Scalar>(
      std::move(out), {x, gamma, beta}, [xhat, inv_std, groups](Node<Scalar>& self) {
        Node<Scalar>* nx = input(self, 0);
        Node<Scalar>* ng = input(self, 1);
        Node<Scalar>* nb = input(self, 2);
        const Shape s = nx->value.shape();
        const Index c = s.c;
        const Index cg = c / groups;
        const Index hw = s.h * s.w;
        const Index block = cg * hw;
        const Scalar* gm = ng->value.data();
        const auto& G = self.grad.array();
        const auto& XH = xhat->array();
        if (ng->requires_grad || nb->requires_grad) {
          Tensor<Scalar>* dg = ng->requires_grad ? &ng->grad_buffer() : nullptr;
          Tensor<Scalar>* db = nb->requires_grad ? &nb->grad_buffer() : nullptr;
          for (Index n = 0; n < s.n; ++n) {
            for (Index ch = 0; ch < c; ++ch) {
              const Index offset = (n * c + ch) * hw;
              if (dg) dg->data()[ch] += (G.segment(offset, hw) * XH.segment(offset, hw)).sum();
              if (db) db->data()[ch] += G.segment(offset, hw).sum();
            }
          }
        }
        if (!nx->requires_grad) return;
        Tensor<Scalar>& dx = nx->grad_buffer();
        Eigen::Array<Scalar, Eigen::Dynamic, 1> dxhat(block);
        for (Index n = 0; n < s.n; ++n) {
          for (Index g = 0; g < groups; ++g) {
            const Index offset = (n * c + g * cg) * hw;
            for (Index ci = 0; ci < cg; ++ci) {
              dxhat.segment(ci * hw, hw) = G.segment(offset + ci * hw, hw) * gm[g * cg + ci];
            }
            const auto xh = XH.segment(offset, block);
            const Scalar m1 = dxhat.mean();
            const Scalar m2 = (dxhat * xh).mean();
            dx.array().segment(offset, block) +=
                (*inv_std)[n * groups + g] * (dxhat - m1 - xh * m2);
          }
        }
      });
}

template <typename Scalar>
Var<Scalar> silu(const Var<Scalar>& x) {
  const auto& a = x.value().array();
  Tensor<Scalar> out(x.shape(), a / (Scalar(1) + (-a).exp()));
  return detail::make_result<Scalar>(std::move(out), {x}, [](Node<Scalar>& self) {
    Node<Scalar>* nx = input(self, 0);
    const auto& a = nx->value.array();
    const auto sig = (Scalar(1) / (Scalar(1) + (-a).exp())).eval();
    nx->accumulate(Tensor<Scalar>(self.grad.shape(),
                                  self.grad.array() * sig * (Scalar(1) + a * (Scalar(1) - sig))));
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape(), x.value().array().max(Scalar(0)));
  return detail::make_result<Scalar>(std::move(out), {x}, [](Node<Scalar>& self) {
    Node<Scalar>* nx = input(self, 0);
    nx->accumulate(Tensor<Scalar>(
        self.grad.shape(),
        (nx->value.array() > Scalar(0)).select(self.grad.array(), Scalar(0))));
  });
}

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: " + sa.str() + " vs " + sb.str());
  }
  Tensor<Scalar> out({sa.n, sa.c + sb.c, sa.h, sa.w});
  for (Index n = 0; n < sa.n; ++n) {
    out.array().segment(n * out.shape().sample(), sa.sample()) =
        a.value().array().segment(n * sa.sample(), sa.sample());
    out.array().segment(n * out.shape().sample() + sa.sample(), sb.sample()) =
        b.value().array().segment(n * sb.sample(), sb.sample());
  }
  return detail::make_result<Scalar>(std::move(out), {a, b}, [sa, sb](Node<Scalar>& self) {
    const Index stride = sa.sample() + sb.sample();
    for (size_t i = 0; i < 2; ++i) {
      Node<Scalar>* in = input(self, i);
      if (!in->requires_grad) continue;
      const Shape s = i == 0 ? sa : sb;
      const Index offset = i == 0 ? 0 : sa.sample();
      Tensor<Scalar>& g = in->grad_buffer();
      for (Index n = 0; n < s.n; ++n) {
        g.array().segment(n * s.sample(), s.sample()) +=
            self.grad.array().segment(n * stride + offset, s.sample());
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> resize_nearest(const Var<Scalar>& x, Index h, Index w) {
  const Shape s = x.shape();
  if (h <= 0 || w <= 0) throw ShapeError("resize_nearest: empty target");
  Tensor<Scalar> out({s.n, s.c, h, w});
  for (Index p = 0; p < s.n * s.c; ++p) {
    const Scalar* src = x.value().data() + p * s.plane();
    Scalar* dst = out.data() + p * h * w;
    for (Index oy = 0; oy < h; ++oy) {
      const Index iy = oy * s.h / h;
      for (Index ox = 0; ox < w; ++ox) dst[oy * w + ox] = src[iy * s.w + ox * s.w / w];
    }
  }
  return detail::make_result<Scalar>(std::move(out), {x}, [s, h, w](Node<Scalar>& self) {
    Tensor<Scalar>& g = input(self, 0)->grad_buffer();
    for (Index p = 0; p < s.n * s.c; ++p) {
      const Scalar* src = self.grad.data() + p * h * w;
      Scalar* dst = g.data() + p * s.plane();
      for (Index oy = 0; oy < h; ++oy) {
        const Index iy = oy * s.h / h;
        for (Index ox = 0; ox < w; ++ox) dst[iy * s.w + ox * s.w / w] += src[oy * w + ox];
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> add_channel_bias(const Var<Scalar>& x, const Var<Scalar>& v) {
  const Shape s = x.shape();
  if (v.shape() != Shape{s.n, s.c, 1, 1}) {
    throw ShapeError("add_channel_bias: " + v.shape().str() + " for " + s.str());
  }
  Tensor<Scalar> out = x.value();
  for (Index p = 0; p < s.n * s.c; ++p) {
    out.array().segment(p * s.plane(), s.plane()) += v.value().data()[p];
  }
  return detail::make_result<Scalar>(std::move(out), {x, v}, [s](Node<Scalar>& self) {
    Node<Scalar>* nx = input(self, 0);
    Node<Scalar>* nv = input(self, 1);
    if (nx->requires_grad) nx->accumulate(self.grad);
    if (nv->requires_grad) {
      Tensor<Scalar>& g = nv->grad_buffer();
      for (Index p = 0; p < s.n * s.c; ++p) {
        g.data()[p] += self.grad.array().segment(p * s.plane(), s.plane()).sum();
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> normalize_channels(const Var<Scalar>& x, Scalar eps) {
  const Shape s = x.shape();
  const Index hw = s.plane();
  auto norms = std::make_shared<Tensor<Scalar>>(Shape{s.n, 1, s.h, s.w});
  Tensor<Scalar> out(s);
  for (Index n = 0; n < s.n; ++n) {
    auto src = x.value().sample(n);
    auto nrm = (src.rowwise().squaredNorm().array() + eps).sqrt().eval();
    norms->array().segment(n * hw, hw) = nrm;
    out.sample(n) = (src.array().colwise() / nrm).matrix();
  }
  return detail::make_result<Scalar>(std::move(out), {x}, [norms, hw](Node<Scalar>& self) {
    Node<Scalar>* nx = input(self, 0);
    Tensor<Scalar>& dx = nx->grad_buffer();
    for (Index n = 0; n < self.value.n(); ++n) {
      auto y = std::as_const(self.value).sample(n).array();
      auto g = std::as_const(self.grad).sample(n).array();
      const auto dot = (y * g).rowwise().sum().eval();
      const auto nrm = norms->array().segment(n * hw, hw);
      dx.sample(n).array() += ((g - y.colwise() * dot).colwise() / nrm);
    }
  });
}

template <typename Scalar>
Var<Scalar> detach(const Var<Scalar>& x) {
  return Var<Scalar>(x.value(), false);
}

template <typename Scalar>
Var<Scalar> straight_through(const Var<Scalar>& x, const Var<Scalar>& y) {
  require_same_shape(x.shape(), y.shape(), "straight_through");
  return detail::make_result<Scalar>(y.value(), {x}, [](Node<Scalar>& self) {
    self.inputs[0]->accumulate(self.grad);
  });
}

template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& table, const std::vector<std::int32_t>& indices,
                        Index n, Index h, Index w) {
  const Index k = table.shape().n;
  const Index d = table.shape().c;
  if (table.shape().h != 1 || table.shape().w != 1) {
    throw ShapeError("gather_rows: table must be (K, d, 1, 1)");
  }
  if (static_cast<Index>(indices.size()) != n * h * w) {
    throw ShapeError("gather_rows: index count does not match grid");
  }
  const Index hw = h * w;
  Tensor<Scalar> out({n, d, h, w});
  const Scalar* tab = table.value().data();
  for (Index b = 0; b < n; ++b) {
    for (Index p = 0; p < hw; ++p) {
      const std::int32_t q = indices[b * hw + p];
      if (q < 0 || q >= k) throw CorruptionError("gather_rows: index out of range");
      for (Index ch = 0; ch < d; ++ch) out.data()[(b * d + ch) * hw + p] = tab[q * d + ch];
    }
  }
  return detail::make_result<Scalar>(
      std::move(out), {table}, [indices, hw, d](Node<Scalar>& self) {
        Tensor<Scalar>& g = input(self, 0)->grad_buffer();
        const Index n = static_cast<Index>(indices.size()) / hw;
        for (Index b = 0; b < n; ++b) {
          for (Index p = 0; p < hw; ++p) {
            const std::int32_t q = indices[b * hw + p];
            for (Index ch = 0; ch < d; ++ch) {
              g.data()[q * d + ch] += self.grad.data()[(b * d + ch) * hw + p];
            }
          }
        }
      });
}

template <typename Scalar>
Var<Scalar> mse(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  const Index count = a.shape().size();
  if (count == 0) throw ShapeError("mse of empty tensors");
  const Scalar value = (a.value().array() - b.value().array()).square().mean();
  Tensor<Scalar> out = Tensor<Scalar>::constant({1, 1, 1, 1}, value);
  return detail::make_result<Scalar>(std::move(out), {a, b}, [count](Node<Scalar>& self) {
    Node<Scalar>* na = input(self, 0);
    Node<Scalar>* nb = input(self, 1);
    const Scalar scale = Scalar(2) * self.grad.array()[0] / static_cast<Scalar>(count);
    const auto diff = (na->value.array() - nb->value.array()).eval();
    if (na->requires_grad) na->accumulate(Tensor<Scalar>(na->value.shape(), scale * diff));
    if (nb->requires_grad) nb->accumulate(Tensor<Scalar>(na->value.shape(), -scale * diff));
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  const Index count = x.shape().size();
  if (count == 0) throw ShapeError("mean of empty tensor");
  Tensor<Scalar> out = Tensor<Scalar>::constant({1, 1, 1, 1}, x.value().array().mean());
  return detail::make_result<Scalar>(std::move(out), {x}, [count](Node<Scalar>& self) {
    Node<Scalar>* nx = input(self, 0);
    nx->accumulate(Tensor<Scalar>::constant(nx->value.shape(),
                                            self.grad.array()[0] / static_cast<Scalar>(count)));
  });
}

#define DIFFO_INSTANTIATE_OPS(S)                                                              \
  template Var<S> operator+(const Var<S>&, const Var<S>&);                                   \
  template Var<S> operator-(const Var<S>&, const Var<S>&);                                   \
  template Var<S> operator*(const Var<S>&, const Var<S>&);                                   \
  template Var<S> operator*<S>(S, const Var<S>&);                                             \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&, Index, Index);         \
  template Var<S> group_norm(const Var<S>&, const Var<S>&, const Var<S>&, Index, S);         \
  template Var<S> silu(const Var<S>&);                                                       \
  template Var<S> relu(const Var<S>&);                                                       \
  template Var<S> concat_channels(const Var<S>&, const Var<S>&);                             \
  template Var<S> resize_nearest(const Var<S>&, Index, Index);                               \
  template Var<S> add_channel_bias(const Var<S>&, const Var<S>&);                            \
  template Var<S> normalize_channels(const Var<S>&, S);                                      \
  template Var<S> detach(const Var<S>&);                                                     \
  template Var<S> straight_through(const Var<S>&, const Var<S>&);                            \
  template Var<S> gather_rows(const Var<S>&, const std::vector<std::int32_t>&, Index, Index, \
                              Index);                                                        \
  template Var<S> mse(const Var<S>&, const Var<S>&);                                         \
  template Var<S> mean(const Var<S>&);

DIFFO_INSTANTIATE_OPS(float)
DIFFO_INSTANTIATE_OPS(double)

}  // namespace diffo
