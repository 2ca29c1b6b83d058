#include <bit>
#include <cstring>
#include <fstream>

#include "fsep/error.hpp"
#include "fsep/train.hpp"
#include "json_util.hpp"

namespace fsep {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written as native little-endian words");

namespace detail {

nlohmann::json spec_to_json(const EmbedderSpec& spec) {
  nlohmann::json j;
  j["kind"] = embedder_kind_name(spec.kind);
  j["input_shape"] = spec.input_shape;
  j["width"] = spec.width;
  j["hidden"] = spec.hidden;
  j["output_dim"] = spec.output_dim;
  return j;
}

EmbedderSpec spec_from_json(const nlohmann::json& j) {
  EmbedderSpec spec;
  spec.kind = embedder_kind_from_name(j.at("kind").get<std::string>());
  spec.input_shape = j.at("input_shape").get<Shape>();
  spec.width = j.at("width").get<int>();
  spec.hidden = j.at("hidden").get<std::vector<int>>();
  spec.output_dim = j.at("output_dim").get<int>();
  spec.validate();
  return spec;
}

nlohmann::json config_to_json(const TrainConfig& config) {
  nlohmann::json j;
  j["way"] = config.way;
  j["shot"] = config.shot;
  j["query"] = config.query;
  j["episodes_per_iter"] = config.episodes_per_iter;
  j["distance"] = distance_kind_name(config.distance);
  j["lr0"] = config.lr0;
  j["schedule"] = config.schedule_multiplier;
  j["max_iters"] = config.max_iters;
  j["val_every"] = config.val_every;
  j["val_episodes"] = config.val_episodes;
  j["patience"] = config.patience;
  j["val_way"] = config.val_way;
  j["seed"] = config.seed;
  return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.way = j.at("way").get<int>();
  c.shot = j.at("shot").get<int>();
  c.query = j.at("query").get<int>();
  c.episodes_per_iter = j.at("episodes_per_iter").get<int>();
  c.distance = distance_kind_from_name(j.at("distance").get<std::string>());
  c.lr0 = j.at("lr0").get<double>();
  c.schedule_multiplier = j.at("schedule").get<int>();
  c.max_iters = j.at("max_iters").get<int64_t>();
  c.val_every = j.at("val_every").get<int64_t>();
  c.val_episodes = j.at("val_episodes").get<int64_t>();
  c.patience = j.at("patience").get<int64_t>();
  c.val_way = j.at("val_way").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  c.validate();
  return c;
}

}  // namespace detail

namespace {

constexpr char kMagic[4] = {'F', 'S', 'E', 'P'};

void append_u32(std::string& out, uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

void append_u64(std::string& out, uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

struct ManifestEntry {
  std::string name;
  Shape shape;
  uint64_t offset;
};

void add_tensor(nlohmann::json& manifest, std::string& payload, const std::string& name,
                const TensorF& t) {
  nlohmann::json entry;
  entry["name"] = name;
  entry["shape"] = t.shape();
  entry["dtype"] = "f32";
  entry["offset"] = payload.size();
  manifest.push_back(std::move(entry));
  payload.append(reinterpret_cast<const char*>(t.data()), static_cast<size_t>(t.size()) * sizeof(float));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json manifest = nlohmann::json::array();
  std::string payload;

  for (const auto& [name, tensor] : ckpt.params.entries) {
    add_tensor(manifest, payload, "params/" + name, tensor);
  }
  if (ckpt.best_params) {
    for (const auto& [name, tensor] : ckpt.best_params->entries) {
      add_tensor(manifest, payload, "best/" + name, tensor);
    }
  }
  for (size_t i = 0; i < ckpt.opt.m.size(); ++i) {
    add_tensor(manifest, payload, "adam_m/" + ckpt.params.entries[i].first, ckpt.opt.m[i]);
  }
  for (size_t i = 0; i < ckpt.opt.v.size(); ++i) {
    add_tensor(manifest, payload, "adam_v/" + ckpt.params.entries[i].first, ckpt.opt.v[i]);
  }

  nlohmann::json header;
  header["spec"] = detail::spec_to_json(ckpt.spec);
  header["config"] = detail::config_to_json(ckpt.config);
  header["iteration"] = ckpt.iteration;
  header["rng"] = {{"sampling", ckpt.sampling_rng_state}, {"validation", ckpt.validation_rng_state}};
  header["adam"] = {{"beta1", ckpt.opt.beta1}, {"beta2", ckpt.opt.beta2}, {"eps", ckpt.opt.eps},
                    {"t", ckpt.opt.t}};
  header["best_val_iter"] = ckpt.best_val_iter;
  if (ckpt.best_val_iter >= 0) header["best_val_loss"] = ckpt.best_val_loss;
  header["bad_validations"] = ckpt.bad_validations;
  header["manifest"] = std::move(manifest);

  const std::string header_bytes = header.dump();
  std::string blob;
  blob.reserve(16 + header_bytes.size() + payload.size());
  blob.append(kMagic, 4);
  append_u32(blob, Checkpoint::kVersion);
  append_u64(blob, header_bytes.size());
  blob += header_bytes;
  blob += payload;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) raise(ErrorCode::IoFailure, "short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, 4) != 0) {
    raise(ErrorCode::CorruptFile, path.string() + ": bad magic");
  }
  uint32_t version;
  std::memcpy(&version, blob.data() + 4, 4);
  if (version != Checkpoint::kVersion) {
    raise(ErrorCode::VersionMismatch, path.string() + ": version " + std::to_string(version) +
                                          ", expected " + std::to_string(Checkpoint::kVersion));
  }
  uint64_t header_len;
  std::memcpy(&header_len, blob.data() + 8, 8);
  if (blob.size() < 16 + header_len) raise(ErrorCode::CorruptFile, path.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.spec = detail::spec_from_json(header.at("spec"));
    ckpt.config = detail::config_from_json(header.at("config"));
    ckpt.iteration = header.at("iteration").get<int64_t>();
    ckpt.sampling_rng_state = header.at("rng").at("sampling").get<std::string>();
    ckpt.validation_rng_state = header.at("rng").at("validation").get<std::string>();
    ckpt.opt.beta1 = header.at("adam").at("beta1").get<double>();
    ckpt.opt.beta2 = header.at("adam").at("beta2").get<double>();
    ckpt.opt.eps = header.at("adam").at("eps").get<double>();
    ckpt.opt.t = header.at("adam").at("t").get<int64_t>();
    ckpt.best_val_iter = header.at("best_val_iter").get<int64_t>();
    if (ckpt.best_val_iter >= 0) ckpt.best_val_loss = header.at("best_val_loss").get<double>();
    ckpt.bad_validations = header.at("bad_validations").get<int64_t>();

    const char* payload = blob.data() + 16 + header_len;
    const uint64_t payload_size = blob.size() - 16 - header_len;
    ParamSet best;
    for (const auto& entry : header.at("manifest")) {
      const std::string name = entry.at("name").get<std::string>();
      const Shape shape = entry.at("shape").get<Shape>();
      if (entry.at("dtype").get<std::string>() != "f32") {
        raise(ErrorCode::CorruptFile, "unsupported dtype for " + name);
      }
      const uint64_t offset = entry.at("offset").get<uint64_t>();
      const uint64_t bytes = static_cast<uint64_t>(shape_size(shape)) * sizeof(float);
      if (offset + bytes > payload_size) {
        raise(ErrorCode::CorruptFile, path.string() + ": tensor " + name + " exceeds payload");
      }
      std::vector<float> values(static_cast<size_t>(shape_size(shape)));
      std::memcpy(values.data(), payload + offset, bytes);
      TensorF tensor(shape, std::move(values));
      if (name.starts_with("params/")) {
        ckpt.params.entries.emplace_back(name.substr(7), std::move(tensor));
      } else if (name.starts_with("best/")) {
        best.entries.emplace_back(name.substr(5), std::move(tensor));
      } else if (name.starts_with("adam_m/")) {
        ckpt.opt.m.push_back(std::move(tensor));
      } else if (name.starts_with("adam_v/")) {
        ckpt.opt.v.push_back(std::move(tensor));
      } else {
        raise(ErrorCode::CorruptFile, "unknown tensor group in " + name);
      }
    }
    if (!best.entries.empty()) ckpt.best_params = std::move(best);
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }

  if (ckpt.opt.m.size() != ckpt.params.entries.size() || ckpt.opt.v.size() != ckpt.params.entries.size()) {
    raise(ErrorCode::CorruptFile, path.string() + ": optimizer state incomplete");
  }
  return ckpt;
}

}  // namespace fsep
