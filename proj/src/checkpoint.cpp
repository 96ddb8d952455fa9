#include "rcav/checkpoint.hpp"

#include <fstream>

#include "rcav/errors.hpp"
#include "rcav/hashing.hpp"
#include "rcav/tensor_io.hpp"

namespace rcav::nn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json save_param(const fs::path& dir, const std::string& file, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  write_file_bytes(dir / file, bytes);
  return {{"file", file}, {"sha256", sha256_hex(bytes)}};
}

Tensor load_param(const fs::path& dir, const json& ref) {
  const fs::path path = dir / ref.at("file").get<std::string>();
  const auto bytes = read_file_bytes(path);
  if (sha256_hex(bytes) != ref.at("sha256").get<std::string>()) {
    throw FormatError("checksum mismatch for " + path.string());
  }
  return decode_tensor(bytes);
}

}  // namespace

json read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("missing " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_checkpoint(const Model& model, const fs::path& dir, const json& extra) {
  fs::create_directories(dir);
  json layers = json::array();
  for (const auto& layer : model.layers()) {
    json j{{"name", layer.name}, {"kind", kind_name(layer.kind)}};
    if (const auto* c = std::get_if<Conv2d>(&layer.kind)) {
      j["kernel"] = c->kernel;
      j["in_ch"] = c->in_ch;
      j["out_ch"] = c->out_ch;
      j["stride"] = c->stride;
      j["pad"] = c->pad;
      j["weight"] = save_param(dir, layer.name + ".weight.rcvt", c->weight);
      j["bias"] = save_param(dir, layer.name + ".bias.rcvt", c->bias);
    } else if (const auto* d = std::get_if<Dense>(&layer.kind)) {
      j["in"] = d->in;
      j["out"] = d->out;
      j["weight"] = save_param(dir, layer.name + ".weight.rcvt", d->weight);
      j["bias"] = save_param(dir, layer.name + ".bias.rcvt", d->bias);
    } else if (const auto* p = std::get_if<MaxPool>(&layer.kind)) {
      j["window"] = p->window;
    }
    layers.push_back(std::move(j));
  }
  json manifest{{"format", "rcav-model"},
                {"version", 1},
                {"input_shape", model.input_shape()},
                {"class_count", model.class_count()},
                {"probe_layers", model.probe_layers()},
                {"layers", std::move(layers)},
                {"extra", extra}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw Error("failed to write " + (dir / "manifest.json").string());
}

Model load_checkpoint(const fs::path& dir) {
  const json m = read_manifest(dir);
  try {
    if (m.at("format") != "rcav-model") throw FormatError("not a model manifest: " + dir.string());
    std::vector<LayerSpec> layers;
    for (const auto& j : m.at("layers")) {
      const auto kind = j.at("kind").get<std::string>();
      const auto name = j.at("name").get<std::string>();
      if (kind == "conv2d") {
        Conv2d c;
        c.kernel = j.at("kernel");
        c.in_ch = j.at("in_ch");
        c.out_ch = j.at("out_ch");
        c.stride = j.at("stride");
        c.pad = j.at("pad");
        c.weight = load_param(dir, j.at("weight"));
        c.bias = load_param(dir, j.at("bias"));
        layers.push_back({name, std::move(c)});
      } else if (kind == "dense") {
        Dense d;
        d.in = j.at("in");
        d.out = j.at("out");
        d.weight = load_param(dir, j.at("weight"));
        d.bias = load_param(dir, j.at("bias"));
        layers.push_back({name, std::move(d)});
      } else if (kind == "relu") {
        layers.push_back({name, Relu{}});
      } else if (kind == "maxpool") {
        layers.push_back({name, MaxPool{j.at("window").get<std::size_t>()}});
      } else if (kind == "global_avg_pool") {
        layers.push_back({name, GlobalAvgPool{}});
      } else if (kind == "flatten") {
        layers.push_back({name, Flatten{}});
      } else {
        throw FormatError("unknown layer kind in checkpoint: " + kind);
      }
    }
    return Model(m.at("input_shape").get<Shape>(), std::move(layers), m.at("class_count").get<std::size_t>(),
                 m.at("probe_layers").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw FormatError("malformed model manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace rcav::nn
