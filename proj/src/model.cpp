#include "ropnet/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "forward_impl.hpp"
#include "geometry.hpp"
#include "ropnet/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "model container assumes a little-endian host");

namespace ropnet {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'R', 'O', 'P', 'M'};
constexpr uint32_t kFormatVersion = 1;

LayerSpec conv_layer(int64_t kh, int64_t kw, int64_t stride, Padding pad, int64_t cout) {
  LayerSpec l;
  l.kind = LayerKind::Conv;
  l.conv.kernel_h = kh;
  l.conv.kernel_w = kw;
  l.conv.stride = stride;
  l.conv.padding = pad;
  l.conv.out_channels = cout;
  return l;
}

LayerSpec depthwise_layer(int64_t k, int64_t stride) {
  LayerSpec l;
  l.kind = LayerKind::DepthwiseConv;
  l.conv.kernel_h = k;
  l.conv.kernel_w = k;
  l.conv.stride = stride;
  l.conv.padding = Padding::Same;
  l.conv.out_channels = 0;  // channel-preserving
  return l;
}

LayerSpec plain_layer(LayerKind kind) {
  LayerSpec l;
  l.kind = kind;
  return l;
}

LayerSpec dense_layer(int64_t units) {
  LayerSpec l;
  l.kind = LayerKind::Dense;
  l.units = units;
  return l;
}

Tensor he_normal(Rng& rng, std::vector<int64_t> shape, int64_t fan_in) {
  Tensor t(std::move(shape));
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal(0.0, std));
  return t;
}

void add_batch_norm(Parameters& params, int64_t layer, int64_t c) {
  params.add(param_name(layer, "gamma"), Tensor::full({c}, 1.0f));
  params.add(param_name(layer, "beta"), Tensor({c}));
  params.add(param_name(layer, "running_mean"), Tensor({c}));
  params.add(param_name(layer, "running_var"), Tensor::full({c}, 1.0f));
}

void check_input_size(int64_t input_size) {
  if (input_size != 64 && input_size != 128 && input_size != 224) {
    raise(ErrorKind::Parameter,
          "input size must be 64, 128 or 224, got " + std::to_string(input_size));
  }
}

}  // namespace

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv:
      return "conv";
    case LayerKind::DepthwiseConv:
      return "depthwise_conv";
    case LayerKind::BatchNorm:
      return "batch_norm";
    case LayerKind::Relu:
      return "relu";
    case LayerKind::Sigmoid:
      return "sigmoid";
    case LayerKind::Flatten:
      return "flatten";
    case LayerKind::Dense:
      return "dense";
  }
  return "?";
}

LayerKind layer_kind_from(const std::string& name) {
  for (LayerKind k : {LayerKind::Conv, LayerKind::DepthwiseConv, LayerKind::BatchNorm,
                      LayerKind::Relu, LayerKind::Sigmoid, LayerKind::Flatten, LayerKind::Dense}) {
    if (name == layer_kind_name(k)) return k;
  }
  raise(ErrorKind::Format, "unknown layer kind '" + name + "'");
}

bool is_trainable_param(const std::string& name) {
  return name.find("running_") == std::string::npos && name != "__input__";
}

std::string param_name(int64_t layer, const char* field) {
  return "l" + std::to_string(layer) + "." + field;
}

template <typename T>
ParamCount count_parameters(const ParametersT<T>& params) {
  ParamCount c;
  for (const auto& name : params.names()) {
    const int64_t n = params.at(name).numel();
    c.total += n;
    if (is_trainable_param(name)) c.trainable += n;
  }
  return c;
}

template ParamCount count_parameters<float>(const ParametersT<float>&);
template ParamCount count_parameters<double>(const ParametersT<double>&);

BuiltModel build_custom_rop_net(int64_t input_size, double width_multiplier, uint64_t seed) {
  check_input_size(input_size);
  if (width_multiplier != 1.0 && width_multiplier != 0.5 && width_multiplier != 0.25) {
    raise(ErrorKind::Parameter, "width multiplier must be 1.0, 0.5 or 0.25");
  }

  BuiltModel m;
  m.spec.name = "custom-rop";
  m.spec.input_h = input_size;
  m.spec.input_w = input_size;
  m.spec.input_c = 3;
  m.spec.width_multiplier = width_multiplier;

  Rng rng(seed);
  int64_t cin = 3;
  for (int64_t base : {16, 32, 64}) {
    const int64_t c = std::max<int64_t>(1, std::llround(static_cast<double>(base) * width_multiplier));
    for (int64_t stride : {1, 2}) {
      const int64_t idx = static_cast<int64_t>(m.spec.layers.size());
      m.spec.layers.push_back(conv_layer(3, 3, stride, Padding::Same, c));
      m.params.add(param_name(idx, "weight"), he_normal(rng, {3, 3, cin, c}, 3 * 3 * cin));
      m.spec.layers.push_back(plain_layer(LayerKind::BatchNorm));
      add_batch_norm(m.params, idx + 1, c);
      m.spec.layers.push_back(plain_layer(LayerKind::Relu));
      cin = c;
    }
  }
  m.spec.layers.push_back(plain_layer(LayerKind::Flatten));
  const int64_t spatial = input_size / 8;  // three stride-2 halvings
  const int64_t feat_in = spatial * spatial * cin;

  int64_t idx = static_cast<int64_t>(m.spec.layers.size());
  m.spec.layers.push_back(dense_layer(160));
  m.params.add(param_name(idx, "weight"), he_normal(rng, {feat_in, 160}, feat_in));
  m.params.add(param_name(idx, "bias"), Tensor({160}));
  m.spec.layers.push_back(plain_layer(LayerKind::Relu));

  idx = static_cast<int64_t>(m.spec.layers.size());
  m.spec.layers.push_back(dense_layer(1));
  m.params.add(param_name(idx, "weight"), he_normal(rng, {160, 1}, 160));
  m.params.add(param_name(idx, "bias"), Tensor({1}));
  m.spec.layers.push_back(plain_layer(LayerKind::Sigmoid));

  infer_shapes(m.spec, 1);
  return m;
}

BuiltModel build_mobilenet_like(int64_t input_size, uint64_t seed) {
  check_input_size(input_size);

  BuiltModel m;
  m.spec.name = "mobilenet-like";
  m.spec.input_h = input_size;
  m.spec.input_w = input_size;
  m.spec.input_c = 3;

  Rng rng(seed);

  // stem
  m.spec.layers.push_back(conv_layer(3, 3, 2, Padding::Same, 32));
  m.params.add(param_name(0, "weight"), he_normal(rng, {3, 3, 3, 32}, 3 * 3 * 3));
  m.spec.layers.push_back(plain_layer(LayerKind::BatchNorm));
  add_batch_norm(m.params, 1, 32);
  m.spec.layers.push_back(plain_layer(LayerKind::Relu));

  int64_t cin = 32;
  int64_t spatial = (input_size + 1) / 2;
  const int64_t pw_out[] = {64, 128, 128, 256, 256, 512, 512, 512};
  for (int block = 0; block < 8; ++block) {
    const int64_t stride = (block % 2 == 1) ? 2 : 1;  // blocks 2,4,6,8 downsample
    int64_t idx = static_cast<int64_t>(m.spec.layers.size());
    m.spec.layers.push_back(depthwise_layer(3, stride));
    m.params.add(param_name(idx, "weight"), he_normal(rng, {3, 3, cin}, 3 * 3));
    m.spec.layers.push_back(plain_layer(LayerKind::BatchNorm));
    add_batch_norm(m.params, idx + 1, cin);
    m.spec.layers.push_back(plain_layer(LayerKind::Relu));
    if (stride == 2) spatial = (spatial + 1) / 2;

    const int64_t cout = pw_out[block];
    idx = static_cast<int64_t>(m.spec.layers.size());
    m.spec.layers.push_back(conv_layer(1, 1, 1, Padding::Same, cout));
    m.params.add(param_name(idx, "weight"), he_normal(rng, {1, 1, cin, cout}, cin));
    m.spec.layers.push_back(plain_layer(LayerKind::BatchNorm));
    add_batch_norm(m.params, idx + 1, cout);
    m.spec.layers.push_back(plain_layer(LayerKind::Relu));
    cin = cout;
  }

  m.spec.layers.push_back(plain_layer(LayerKind::Flatten));
  const int64_t feat_in = spatial * spatial * cin;
  const int64_t idx = static_cast<int64_t>(m.spec.layers.size());
  m.spec.layers.push_back(dense_layer(1));
  m.params.add(param_name(idx, "weight"), he_normal(rng, {feat_in, 1}, feat_in));
  m.params.add(param_name(idx, "bias"), Tensor({1}));
  m.spec.layers.push_back(plain_layer(LayerKind::Sigmoid));

  infer_shapes(m.spec, 1);
  return m;
}

std::vector<std::vector<int64_t>> infer_shapes(const ModelSpec& spec, int64_t batch) {
  std::vector<std::vector<int64_t>> shapes;
  shapes.reserve(spec.layers.size());
  std::vector<int64_t> cur = {batch, spec.input_h, spec.input_w, spec.input_c};
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& l = spec.layers[li];
    switch (l.kind) {
      case LayerKind::Conv: {
        if (cur.size() != 4) raise(ErrorKind::Shape, "conv needs rank-4 input");
        const auto g = detail::conv_geom(cur, l.conv.kernel_h, l.conv.kernel_w,
                                         l.conv.out_channels, l.conv.stride, l.conv.padding);
        cur = {g.n, g.out_h, g.out_w, g.cout};
        break;
      }
      case LayerKind::DepthwiseConv: {
        if (cur.size() != 4) raise(ErrorKind::Shape, "depthwise conv needs rank-4 input");
        const auto g = detail::conv_geom(cur, l.conv.kernel_h, l.conv.kernel_w, cur[3],
                                         l.conv.stride, l.conv.padding);
        cur = {g.n, g.out_h, g.out_w, g.cin};
        break;
      }
      case LayerKind::BatchNorm:
        if (cur.size() != 4) raise(ErrorKind::Shape, "batch norm needs rank-4 input");
        break;
      case LayerKind::Relu:
      case LayerKind::Sigmoid:
        break;
      case LayerKind::Flatten: {
        if (cur.size() < 2) raise(ErrorKind::Shape, "flatten needs rank >= 2");
        int64_t rest = 1;
        for (size_t a = 1; a < cur.size(); ++a) rest *= cur[a];
        cur = {cur[0], rest};
        break;
      }
      case LayerKind::Dense: {
        if (cur.size() != 2) raise(ErrorKind::Shape, "dense needs rank-2 input");
        cur = {cur[0], l.units};
        break;
      }
    }
    shapes.push_back(cur);
  }
  if (!shapes.empty()) {
    const auto& out = shapes.back();
    if (out.size() != 2 || out[1] != 1) {
      raise(ErrorKind::Shape, "model must end in a [N,1] output");
    }
  }
  return shapes;
}

template <typename T>
TensorT<T> forward(const ModelSpec& spec, ParametersT<T>& params, const TensorT<T>& batch,
                   BatchNormMode mode) {
  return detail::apply_layers(spec, params, batch, mode, static_cast<TapeT<T>*>(nullptr));
}

template <typename T>
TensorT<T> forward(const ModelSpec& spec, const ParametersT<T>& params, const TensorT<T>& batch) {
  // infer mode never mutates running stats, so the const_cast stays honest
  auto& p = const_cast<ParametersT<T>&>(params);
  return detail::apply_layers(spec, p, batch, BatchNormMode::Infer, static_cast<TapeT<T>*>(nullptr));
}

template TensorT<float> forward<float>(const ModelSpec&, ParametersT<float>&, const TensorT<float>&,
                                       BatchNormMode);
template TensorT<double> forward<double>(const ModelSpec&, ParametersT<double>&,
                                         const TensorT<double>&, BatchNormMode);
template TensorT<float> forward<float>(const ModelSpec&, const ParametersT<float>&,
                                       const TensorT<float>&);
template TensorT<double> forward<double>(const ModelSpec&, const ParametersT<double>&,
                                         const TensorT<double>&);

// ---- serialization ---------------------------------------------------------

namespace {

json spec_to_json(const ModelSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) {
    json jl;
    jl["kind"] = layer_kind_name(l.kind);
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::DepthwiseConv) {
      jl["kernel"] = {l.conv.kernel_h, l.conv.kernel_w};
      jl["stride"] = l.conv.stride;
      jl["padding"] = l.conv.padding == Padding::Same ? "same" : "valid";
      if (l.kind == LayerKind::Conv) jl["out_channels"] = l.conv.out_channels;
    } else if (l.kind == LayerKind::Dense) {
      jl["units"] = l.units;
    }
    layers.push_back(std::move(jl));
  }
  return json{{"name", spec.name},
              {"input", {spec.input_h, spec.input_w, spec.input_c}},
              {"width_multiplier", spec.width_multiplier},
              {"layers", std::move(layers)}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec spec;
  spec.name = j.at("name").get<std::string>();
  const auto& in = j.at("input");
  spec.input_h = in.at(0).get<int64_t>();
  spec.input_w = in.at(1).get<int64_t>();
  spec.input_c = in.at(2).get<int64_t>();
  spec.width_multiplier = j.at("width_multiplier").get<double>();
  for (const auto& jl : j.at("layers")) {
    LayerSpec l;
    l.kind = layer_kind_from(jl.at("kind").get<std::string>());
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::DepthwiseConv) {
      l.conv.kernel_h = jl.at("kernel").at(0).get<int64_t>();
      l.conv.kernel_w = jl.at("kernel").at(1).get<int64_t>();
      l.conv.stride = jl.at("stride").get<int64_t>();
      const auto pad = jl.at("padding").get<std::string>();
      if (pad != "same" && pad != "valid") raise(ErrorKind::Format, "bad padding '" + pad + "'");
      l.conv.padding = pad == "same" ? Padding::Same : Padding::Valid;
      if (l.kind == LayerKind::Conv) l.conv.out_channels = jl.at("out_channels").get<int64_t>();
    } else if (l.kind == LayerKind::Dense) {
      l.units = jl.at("units").get<int64_t>();
    }
    spec.layers.push_back(std::move(l));
  }
  return spec;
}

void put_u32(std::string& out, uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::string& out, uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); }

struct Reader {
  const char* p;
  size_t n;
  size_t off = 0;

  void need(size_t k, const char* what) {
    if (off + k > n) {
      raise(ErrorKind::Format, std::string("model file truncated reading ") + what + " at byte " +
                                   std::to_string(off));
    }
  }
  void bytes(void* dst, size_t k, const char* what) {
    need(k, what);
    std::memcpy(dst, p + off, k);
    off += k;
  }
  uint32_t u32(const char* what) {
    uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
  uint64_t u64(const char* what) {
    uint64_t v;
    bytes(&v, 8, what);
    return v;
  }
  uint8_t u8(const char* what) {
    uint8_t v;
    bytes(&v, 1, what);
    return v;
  }
  std::string str(size_t k, const char* what) {
    need(k, what);
    std::string s(p + off, k);
    off += k;
    return s;
  }
};

void validate_params_against_spec(const ModelSpec& spec, const Parameters& params) {
  const auto shapes = infer_shapes(spec, 1);
  std::vector<int64_t> cur = {1, spec.input_h, spec.input_w, spec.input_c};
  size_t expected = 0;
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& l = spec.layers[li];
    const int64_t idx = static_cast<int64_t>(li);
    const auto check = [&](const char* field, const std::vector<int64_t>& shape) {
      const std::string name = param_name(idx, field);
      ++expected;
      if (!params.has(name)) raise(ErrorKind::Format, "missing parameter '" + name + "'");
      if (params.at(name).shape() != shape) {
        raise(ErrorKind::Format, "parameter '" + name + "' has unexpected shape");
      }
    };
    switch (l.kind) {
      case LayerKind::Conv:
        check("weight", {l.conv.kernel_h, l.conv.kernel_w, cur[3], l.conv.out_channels});
        break;
      case LayerKind::DepthwiseConv:
        check("weight", {l.conv.kernel_h, l.conv.kernel_w, cur[3]});
        break;
      case LayerKind::BatchNorm:
        for (const char* f : {"gamma", "beta", "running_mean", "running_var"}) check(f, {cur[3]});
        break;
      case LayerKind::Dense:
        check("weight", {cur[1], l.units});
        check("bias", {l.units});
        break;
      default:
        break;
    }
    cur = shapes[li];
  }
  if (expected != params.size()) {
    raise(ErrorKind::Format, "model file carries parameters the layer table does not declare");
  }
}

}  // namespace

void save_model(const ModelSpec& spec, const Parameters& params, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kFormatVersion);
  const std::string desc = spec_to_json(spec).dump();
  put_u32(out, static_cast<uint32_t>(desc.size()));
  out += desc;
  put_u64(out, params.size());
  for (const auto& name : params.names()) {
    const Tensor& t = params.at(name);
    put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    out.push_back(0);  // dtype tag: f32
    put_u32(out, static_cast<uint32_t>(t.rank()));
    for (int64_t e : t.shape()) put_u64(out, static_cast<uint64_t>(e));
    out.append(reinterpret_cast<const char*>(t.data()), sizeof(float) * t.numel());
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorKind::Io, "cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) raise(ErrorKind::Io, "short write to '" + path + "'");
}

BuiltModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(ErrorKind::Io, "cannot open model file '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r{buf.data(), buf.size()};

  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    raise(ErrorKind::Format, "bad model magic at byte 0");
  }
  const uint32_t version = r.u32("version");
  if (version != kFormatVersion) {
    raise(ErrorKind::Format, "unsupported model format version " + std::to_string(version) +
                                 " at byte 4");
  }
  const uint32_t desc_len = r.u32("descriptor length");
  const std::string desc = r.str(desc_len, "spec descriptor");
  ModelSpec spec;
  try {
    spec = spec_from_json(json::parse(desc));
  } catch (const json::exception& e) {
    raise(ErrorKind::Format, std::string("bad spec descriptor: ") + e.what());
  }

  BuiltModel m;
  m.spec = std::move(spec);
  const uint64_t n_params = r.u64("parameter count");
  for (uint64_t i = 0; i < n_params; ++i) {
    const uint32_t name_len = r.u32("parameter name length");
    const std::string name = r.str(name_len, "parameter name");
    const uint8_t dtype = r.u8("dtype tag");
    if (dtype != 0) {
      raise(ErrorKind::Format, "unsupported dtype tag " + std::to_string(int(dtype)) +
                                   " for '" + name + "' at byte " + std::to_string(r.off - 1));
    }
    const uint32_t rank = r.u32("rank");
    if (rank == 0 || rank > 8) raise(ErrorKind::Format, "bad rank for '" + name + "'");
    std::vector<int64_t> shape(rank);
    int64_t numel = 1;
    for (uint32_t a = 0; a < rank; ++a) {
      const uint64_t e = r.u64("extent");
      if (e == 0 || e > (uint64_t(1) << 32)) raise(ErrorKind::Format, "bad extent for '" + name + "'");
      shape[a] = static_cast<int64_t>(e);
      numel *= shape[a];
      if (numel > (int64_t(1) << 33)) raise(ErrorKind::Format, "parameter '" + name + "' too large");
    }
    std::vector<float> data(static_cast<size_t>(numel));
    r.bytes(data.data(), sizeof(float) * static_cast<size_t>(numel), "parameter payload");
    m.params.add(name, Tensor(std::move(shape), std::move(data)));
  }
  if (r.off != r.n) {
    raise(ErrorKind::Format, "trailing bytes after parameters at byte " + std::to_string(r.off));
  }
  validate_params_against_spec(m.spec, m.params);
  return m;
}

}  // namespace ropnet
