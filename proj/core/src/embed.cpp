#include "fsep/embed.hpp"

#include <cmath>

#include "fsep/error.hpp"

namespace fsep {

void EmbedderSpec::validate() const {
  switch (kind) {
    case Kind::convnet4: {
      if (input_shape.size() != 3 || input_shape[1] != input_shape[2]) {
        raise(ErrorCode::InvalidSpec, "convnet4 needs [c,n,n] input, got " + shape_to_string(input_shape));
      }
      // Four floor-halved pools must keep at least one spatial cell.
      if (input_shape[1] < 16) {
        raise(ErrorCode::InvalidSpec, "convnet4 needs n >= 16, got n = " + std::to_string(input_shape[1]));
      }
      if (width < 1) raise(ErrorCode::InvalidSpec, "convnet4 width must be >= 1");
      if (output_dim != 0 && output_dim != embedding_dim()) {
        raise(ErrorCode::InvalidSpec, "output_dim " + std::to_string(output_dim) +
                                          " contradicts derived M = " + std::to_string(embedding_dim()));
      }
      break;
    }
    case Kind::mlp: {
      if (input_shape.size() != 1 || input_shape[0] < 1) {
        raise(ErrorCode::InvalidSpec, "mlp needs [dim] input, got " + shape_to_string(input_shape));
      }
      if (output_dim < 1) raise(ErrorCode::InvalidSpec, "mlp output_dim must be >= 1");
      for (int h : hidden) {
        if (h < 1) raise(ErrorCode::InvalidSpec, "mlp hidden sizes must be >= 1");
      }
      break;
    }
  }
}

int64_t EmbedderSpec::embedding_dim() const {
  if (kind == Kind::mlp) return output_dim;
  int64_t s = input_shape[1];
  for (int i = 0; i < 4; ++i) s /= 2;
  return static_cast<int64_t>(width) * s * s;
}

int64_t EmbedderSpec::param_count() const {
  int64_t total = 0;
  if (kind == Kind::convnet4) {
    int64_t cin = input_shape[0];
    for (int b = 0; b < 4; ++b) {
      total += static_cast<int64_t>(width) * cin * 9 + width;  // conv weight + bias
      total += 2 * static_cast<int64_t>(width);                // bn scale + shift
      cin = width;
    }
  } else {
    int64_t in = input_shape[0];
    std::vector<int64_t> outs(hidden.begin(), hidden.end());
    outs.push_back(output_dim);
    for (int64_t out : outs) {
      total += in * out + out;
      in = out;
    }
  }
  return total;
}

std::string embedder_kind_name(EmbedderSpec::Kind kind) {
  return kind == EmbedderSpec::Kind::convnet4 ? "convnet4" : "mlp";
}

EmbedderSpec::Kind embedder_kind_from_name(const std::string& name) {
  if (name == "convnet4") return EmbedderSpec::Kind::convnet4;
  if (name == "mlp") return EmbedderSpec::Kind::mlp;
  raise(ErrorCode::InvalidValue, "embedder kind must be convnet4 or mlp, got '" + name + "'");
}

template <typename T>
int64_t ParamSetT<T>::total_size() const {
  int64_t total = 0;
  for (const auto& [name, tensor] : entries) total += tensor.size();
  return total;
}

template <typename T>
const Tensor<T>& ParamSetT<T>::at(const std::string& name) const {
  for (const auto& [n, tensor] : entries) {
    if (n == name) return tensor;
  }
  raise(ErrorCode::InvalidArgument, "no parameter named " + name);
}

namespace {

template <typename T>
Tensor<T> glorot_uniform(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

}  // namespace

template <typename T>
ParamSetT<T> init_params(const EmbedderSpec& spec, Rng& rng) {
  spec.validate();
  ParamSetT<T> params;
  if (spec.kind == EmbedderSpec::Kind::convnet4) {
    int64_t cin = spec.input_shape[0];
    for (int b = 1; b <= 4; ++b) {
      const std::string prefix = "block" + std::to_string(b);
      const int64_t co = spec.width;
      params.entries.emplace_back(prefix + ".conv.weight",
                                  glorot_uniform<T>({co, cin, 3, 3}, cin * 9, co * 9, rng));
      params.entries.emplace_back(prefix + ".conv.bias", Tensor<T>({co}));
      params.entries.emplace_back(prefix + ".bn.scale", Tensor<T>::full({co}, T(1)));
      params.entries.emplace_back(prefix + ".bn.shift", Tensor<T>({co}));
      cin = co;
    }
  } else {
    int64_t in = spec.input_shape[0];
    std::vector<int64_t> outs(spec.hidden.begin(), spec.hidden.end());
    outs.push_back(spec.output_dim);
    for (size_t layer = 0; layer < outs.size(); ++layer) {
      const std::string prefix = "layer" + std::to_string(layer + 1);
      const int64_t out = outs[layer];
      params.entries.emplace_back(prefix + ".weight", glorot_uniform<T>({in, out}, in, out, rng));
      params.entries.emplace_back(prefix + ".bias", Tensor<T>({out}));
      in = out;
    }
  }
  return params;
}

template <typename T>
NodeId ParamNodes<T>::at(const std::string& name) const {
  for (const auto& [n, id] : entries) {
    if (n == name) return id;
  }
  raise(ErrorCode::InvalidArgument, "no parameter node named " + name);
}

template <typename T>
ParamNodes<T> insert_params(Graph<T>& g, const ParamSetT<T>& params) {
  ParamNodes<T> nodes;
  nodes.entries.reserve(params.entries.size());
  for (const auto& [name, tensor] : params.entries) nodes.entries.emplace_back(name, g.param(tensor));
  return nodes;
}

template <typename T>
NodeId embed(const EmbedderSpec& spec, const ParamNodes<T>& params, Graph<T>& g, NodeId batch) {
  spec.validate();
  const Tensor<T>& in = g.value(batch);
  Shape expected;
  expected.push_back(in.dim(0));
  for (int64_t d : spec.input_shape) expected.push_back(d);
  if (in.shape() != expected) {
    raise(ErrorCode::ShapeMismatch, "embed expects batch shape " + shape_to_string(expected) +
                                        ", got " + shape_to_string(in.shape()));
  }

  if (spec.kind == EmbedderSpec::Kind::convnet4) {
    if (in.dim(0) < 2) {
      raise(ErrorCode::BatchTooSmall, "batchnorm needs a batch of >= 2");
    }
    NodeId h = batch;
    for (int b = 1; b <= 4; ++b) {
      const std::string prefix = "block" + std::to_string(b);
      h = g.conv2d(h, params.at(prefix + ".conv.weight"), params.at(prefix + ".conv.bias"));
      h = g.batchnorm2d(h, params.at(prefix + ".bn.scale"), params.at(prefix + ".bn.shift"));
      h = g.relu(h);
      h = g.maxpool2x2(h);
    }
    return g.flatten(h);
  }

  const size_t layers = spec.hidden.size() + 1;
  NodeId h = batch;
  for (size_t layer = 1; layer <= layers; ++layer) {
    const std::string prefix = "layer" + std::to_string(layer);
    h = g.add(g.matmul(h, params.at(prefix + ".weight")), params.at(prefix + ".bias"));
    if (layer != layers) h = g.relu(h);
  }
  return h;
}

template <typename T>
std::vector<T> flatten_params(const ParamSetT<T>& params) {
  std::vector<T> flat;
  flat.reserve(static_cast<size_t>(params.total_size()));
  for (const auto& [name, tensor] : params.entries) {
    flat.insert(flat.end(), tensor.values().begin(), tensor.values().end());
  }
  return flat;
}

template <typename T>
ParamSetT<T> unflatten_params(const ParamSetT<T>& reference, std::span<const T> flat) {
  if (static_cast<int64_t>(flat.size()) != reference.total_size()) {
    raise(ErrorCode::LengthMismatch, "expected " + std::to_string(reference.total_size()) +
                                         " values, got " + std::to_string(flat.size()));
  }
  ParamSetT<T> out;
  out.entries.reserve(reference.entries.size());
  size_t offset = 0;
  for (const auto& [name, tensor] : reference.entries) {
    std::vector<T> values(flat.begin() + offset, flat.begin() + offset + static_cast<size_t>(tensor.size()));
    offset += static_cast<size_t>(tensor.size());
    out.entries.emplace_back(name, Tensor<T>(tensor.shape(), std::move(values)));
  }
  return out;
}

template struct ParamSetT<float>;
template struct ParamSetT<double>;
template ParamSetT<float> init_params<float>(const EmbedderSpec&, Rng&);
template ParamSetT<double> init_params<double>(const EmbedderSpec&, Rng&);
template struct ParamNodes<float>;
template struct ParamNodes<double>;
template ParamNodes<float> insert_params<float>(Graph<float>&, const ParamSetT<float>&);
template ParamNodes<double> insert_params<double>(Graph<double>&, const ParamSetT<double>&);
template NodeId embed<float>(const EmbedderSpec&, const ParamNodes<float>&, Graph<float>&, NodeId);
template NodeId embed<double>(const EmbedderSpec&, const ParamNodes<double>&, Graph<double>&, NodeId);
template std::vector<float> flatten_params<float>(const ParamSetT<float>&);
template std::vector<double> flatten_params<double>(const ParamSetT<double>&);
template ParamSetT<float> unflatten_params<float>(const ParamSetT<float>&, std::span<const float>);
template ParamSetT<double> unflatten_params<double>(const ParamSetT<double>&, std::span<const double>);

}  // namespace fsep
