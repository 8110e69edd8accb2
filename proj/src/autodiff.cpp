#include "ropnet/autodiff.hpp"

#include <cmath>
#include <unordered_set>

#include "forward_impl.hpp"
#include "geometry.hpp"
#include "ropnet/kernels.hpp"
#include "ropnet/rng.hpp"

namespace ropnet {
namespace {

template <typename T>
TensorT<T> transpose2d(const TensorT<T>& m) {
  const int64_t a = m.extent(0), b = m.extent(1);
  TensorT<T> out({b, a});
  for (int64_t i = 0; i < a; ++i) {
    for (int64_t j = 0; j < b; ++j) out[j * a + i] = m[i * b + j];
  }
  return out;
}

// [kh,kw,cin,cout] -> [kh,kw,cout,cin], the layout conv2d_bwd_input wants
template <typename T>
TensorT<T> conv_weights_transposed(const TensorT<T>& w) {
  const int64_t kh = w.extent(0), kw = w.extent(1), ci = w.extent(2), co = w.extent(3);
  TensorT<T> out({kh, kw, co, ci});
  for (int64_t k = 0; k < kh * kw; ++k) {
    const T* src = w.data() + k * ci * co;
    T* dst = out.data() + k * co * ci;
    for (int64_t i = 0; i < ci; ++i) {
      for (int64_t j = 0; j < co; ++j) dst[j * ci + i] = src[i * co + j];
    }
  }
  return out;
}

template <typename T>
TensorT<T> column_sums(const TensorT<T>& m) {
  const int64_t rows = m.extent(0), cols = m.extent(1);
  TensorT<T> out({cols});
  for (int64_t j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (int64_t i = 0; i < rows; ++i) acc += static_cast<double>(m[i * cols + j]);
    out[j] = static_cast<T>(acc);
  }
  return out;
}

// Train-mode batch norm backward through the batch statistics:
//   dβ_c = Σ dy,  dγ_c = Σ dy·x̂
//   dx = γ·invstd · (dy − dβ_c/m − x̂·dγ_c/m)
template <typename T>
void batch_norm_backward(const TapeNodeT<T>& node, const TensorT<T>& gamma, const TensorT<T>& dy,
                         TensorT<T>& dgamma, TensorT<T>& dbeta, TensorT<T>& dx) {
  const int64_t c = node.x.extent(3);
  const int64_t rows = node.x.numel() / c;
  const double m = static_cast<double>(rows);

  std::vector<double> s_dy(static_cast<size_t>(c), 0.0);
  std::vector<double> s_dy_xhat(static_cast<size_t>(c), 0.0);
  const T* xp = node.x.data();
  const T* dyp = dy.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = xp + r * c;
    const T* dr = dyp + r * c;
    for (int64_t ch = 0; ch < c; ++ch) {
      const double xhat = static_cast<double>(
          static_cast<T>((xr[ch] - node.bn_mean[ch]) * node.bn_invstd[ch]));
      s_dy[static_cast<size_t>(ch)] += static_cast<double>(dr[ch]);
      s_dy_xhat[static_cast<size_t>(ch)] += static_cast<double>(dr[ch]) * xhat;
    }
  }

  dgamma = TensorT<T>({c});
  dbeta = TensorT<T>({c});
  for (int64_t ch = 0; ch < c; ++ch) {
    dgamma[ch] = static_cast<T>(s_dy_xhat[static_cast<size_t>(ch)]);
    dbeta[ch] = static_cast<T>(s_dy[static_cast<size_t>(ch)]);
  }

  dx = TensorT<T>(node.x.shape());
  T* dxp = dx.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = xp + r * c;
    const T* dr = dyp + r * c;
    T* dxr = dxp + r * c;
    for (int64_t ch = 0; ch < c; ++ch) {
      const double xhat = static_cast<double>(
          static_cast<T>((xr[ch] - node.bn_mean[ch]) * node.bn_invstd[ch]));
      const double scale = static_cast<double>(gamma[ch]) * static_cast<double>(node.bn_invstd[ch]);
      const double v = static_cast<double>(dr[ch]) - s_dy[static_cast<size_t>(ch)] / m -
                       xhat * s_dy_xhat[static_cast<size_t>(ch)] / m;
      dxr[ch] = static_cast<T>(scale * v);
    }
  }
}

}  // namespace

template <typename T>
TensorT<T> forward_record(const ModelSpec& spec, ParametersT<T>& params, const TensorT<T>& input,
                          TapeT<T>& tape) {
  return detail::apply_layers(spec, params, input, BatchNormMode::Train, &tape);
}

template <typename T>
GradientSetT<T> backward(const TapeT<T>& tape, const TensorT<T>& seed) {
  if (!tape.spec || !tape.params || tape.nodes.empty()) {
    raise(ErrorKind::Parameter, "backward needs a tape produced by forward_record");
  }
  if (seed.shape() != tape.output.shape()) {
    raise(ErrorKind::Shape, "gradient seed shape does not match the taped output");
  }

  GradientSetT<T> out;
  const ModelSpec& spec = *tape.spec;
  const ParametersT<T>& params = *tape.params;

  TensorT<T> dy = seed;
  for (auto it = tape.nodes.rbegin(); it != tape.nodes.rend(); ++it) {
    const TapeNodeT<T>& node = *it;
    const LayerSpec& layer = spec.layers[static_cast<size_t>(node.layer)];
    switch (node.kind) {
      case LayerKind::Sigmoid: {
        TensorT<T> dx(node.y.shape());
        for (int64_t i = 0; i < dx.numel(); ++i) {
          dx[i] = dy[i] * node.y[i] * (T(1) - node.y[i]);
        }
        dy = std::move(dx);
        break;
      }
      case LayerKind::Relu: {
        TensorT<T> dx(node.x.shape());
        for (int64_t i = 0; i < dx.numel(); ++i) {
          dx[i] = node.x[i] > T(0) ? dy[i] : T(0);  // subgradient at 0 is 0
        }
        dy = std::move(dx);
        break;
      }
      case LayerKind::Flatten: {
        dy = dy.reshaped(node.in_shape);
        break;
      }
      case LayerKind::Dense: {
        const TensorT<T>& w = params.at(param_name(node.layer, "weight"));
        out.grads.emplace(param_name(node.layer, "weight"), matmul(transpose2d(node.x), dy));
        out.grads.emplace(param_name(node.layer, "bias"), column_sums(dy));
        dy = matmul(dy, transpose2d(w));
        break;
      }
      case LayerKind::BatchNorm: {
        TensorT<T> dgamma, dbeta, dx;
        batch_norm_backward(node, params.at(param_name(node.layer, "gamma")), dy, dgamma, dbeta,
                            dx);
        out.grads.emplace(param_name(node.layer, "gamma"), std::move(dgamma));
        out.grads.emplace(param_name(node.layer, "beta"), std::move(dbeta));
        dy = std::move(dx);
        break;
      }
      case LayerKind::Conv: {
        const TensorT<T>& w = params.at(param_name(node.layer, "weight"));
        const auto g = detail::conv_geom(node.x.shape(), w.extent(0), w.extent(1), w.extent(3),
                                         layer.conv.stride, layer.conv.padding);
        TensorT<T> dw(w.shape());
        kern::conv2d_bwd_weights(node.x.data(), dy.data(), dw.data(), g);
        out.grads.emplace(param_name(node.layer, "weight"), std::move(dw));
        const TensorT<T> wt = conv_weights_transposed(w);
        TensorT<T> dx(node.x.shape());
        kern::conv2d_bwd_input(dy.data(), wt.data(), dx.data(), g);
        dy = std::move(dx);
        break;
      }
      case LayerKind::DepthwiseConv: {
        const TensorT<T>& w = params.at(param_name(node.layer, "weight"));
        const auto g = detail::conv_geom(node.x.shape(), w.extent(0), w.extent(1),
                                         node.x.extent(3), layer.conv.stride, layer.conv.padding);
        TensorT<T> dw(w.shape());
        kern::depthwise2d_bwd_weights(node.x.data(), dy.data(), dw.data(), g);
        out.grads.emplace(param_name(node.layer, "weight"), std::move(dw));
        TensorT<T> dx(node.x.shape());
        kern::depthwise2d_bwd_input(dy.data(), w.data(), dx.data(), g);
        dy = std::move(dx);
        break;
      }
      default:
        raise(ErrorKind::Capability, "unsupported layer kind on tape");
    }
  }
  out.grads.emplace(kInputGradName, std::move(dy));
  return out;
}

template TensorT<float> forward_record<float>(const ModelSpec&, ParametersT<float>&,
                                              const TensorT<float>&, TapeT<float>&);
template TensorT<double> forward_record<double>(const ModelSpec&, ParametersT<double>&,
                                                const TensorT<double>&, TapeT<double>&);
template GradientSetT<float> backward<float>(const TapeT<float>&, const TensorT<float>&);
template GradientSetT<double> backward<double>(const TapeT<double>&, const TensorT<double>&);

GradCheckReport grad_check(const std::function<double(ParametersT<double>&)>& f,
                           ParametersT<double>& params, const GradientSetT<double>& analytic,
                           double h, double tolerance, uint64_t seed) {
  if (h <= 0.0) raise(ErrorKind::Parameter, "grad_check step h must be > 0");
  constexpr int64_t kMaxCoords = 128;

  GradCheckReport report;
  const auto eval = [&](double& slot, double v) {
    const double saved = slot;
    slot = v;
    const double r = f(params);
    slot = saved;
    if (!std::isfinite(r)) raise(ErrorKind::Numeric, "grad_check objective is not finite");
    return r;
  };

  uint64_t param_index = 0;
  for (const auto& name : params.names()) {
    if (!is_trainable_param(name)) continue;
    const auto git = analytic.grads.find(name);
    if (git == analytic.grads.end()) {
      raise(ErrorKind::Parameter, "analytic gradient set is missing '" + name + "'");
    }
    TensorT<double>& p = params.at(name);
    if (git->second.shape() != p.shape()) {
      raise(ErrorKind::Shape, "analytic gradient for '" + name + "' has the wrong shape");
    }

    std::vector<int64_t> coords;
    if (p.numel() <= kMaxCoords) {
      coords.resize(static_cast<size_t>(p.numel()));
      for (int64_t i = 0; i < p.numel(); ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      Rng rng(Rng::mix(seed, param_index));
      std::unordered_set<int64_t> seen;
      while (static_cast<int64_t>(coords.size()) < kMaxCoords) {
        const int64_t i = rng.uniform_int(p.numel());
        if (seen.insert(i).second) coords.push_back(i);
      }
    }
    ++param_index;

    for (int64_t i : coords) {
      const double theta = p[i];
      const double fp = eval(p[i], theta + h);
      const double fm = eval(p[i], theta - h);
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = git->second[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  report.ok = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace ropnet
