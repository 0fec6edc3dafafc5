#include "swdnet/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "swdnet/errors.hpp"

namespace swdnet {

namespace {

constexpr char kMagic[8] = {'S', 'W', 'D', 'N', 'E', 'T', 'C', '1'};
constexpr int kVersion = 1;

uint64_t fnv1a64(const uint8_t* p, size_t n) {
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void append_floats(std::vector<uint8_t>& blob, const std::vector<float>& v) {
  const size_t off = blob.size();
  blob.resize(off + v.size() * sizeof(float));
  std::memcpy(blob.data() + off, v.data(), v.size() * sizeof(float));
}

}  // namespace

void checkpoint_save(const ModelGraph& graph, const SgdState& opt, const SwdSchedule& schedule,
                     const TrainProgress& progress, uint64_t seed, const std::string& path) {
  nlohmann::json manifest;
  manifest["version"] = kVersion;
  manifest["arch"] = {{"name", graph.arch},
                      {"depth_blocks", graph.depth_blocks},
                      {"base_width", graph.base_width},
                      {"num_classes", graph.num_classes},
                      {"input_shape", graph.input_shape}};
  manifest["seed"] = seed;
  manifest["schedule"] = {{"a_min", schedule.a_min},
                          {"a_max", schedule.a_max},
                          {"s", schedule.s},
                          {"s_final", schedule.s_final}};
  manifest["progress"] = {{"next_epoch", progress.next_epoch}, {"step", progress.step}};

  std::vector<uint8_t> blob;
  nlohmann::json entries = nlohmann::json::array();
  auto record = [&](const std::string& kind, const std::string& name, const Shape& shape,
                    size_t offset, size_t count, const std::string& dtype) {
    entries.push_back({{"kind", kind},
                       {"name", name},
                       {"shape", shape},
                       {"offset", offset},
                       {"count", count},
                       {"dtype", dtype}});
  };

  for (size_t pi = 0; pi < graph.params.size(); ++pi) {
    const Param& p = graph.params[pi];
    record("param", p.name, p.tensor.shape, blob.size(), p.tensor.data.size(), "f32");
    append_floats(blob, p.tensor.data);
    if (pi < opt.velocity.size() && opt.velocity[pi].size() == p.tensor.data.size()) {
      record("velocity", p.name, p.tensor.shape, blob.size(), p.tensor.data.size(), "f32");
      append_floats(blob, opt.velocity[pi]);
    }
    if (!p.frozen.empty()) {
      record("frozen", p.name, p.tensor.shape, blob.size(), p.frozen.size(), "u8");
      blob.insert(blob.end(), p.frozen.begin(), p.frozen.end());
    }
  }
  for (const Layer& l : graph.layers) {
    if (l.kind != LayerKind::BatchNorm) continue;
    record("running_mean", l.name, {l.channels()}, blob.size(), l.running_mean.size(), "f32");
    append_floats(blob, l.running_mean);
    record("running_var", l.name, {l.channels()}, blob.size(), l.running_var.size(), "f32");
    append_floats(blob, l.running_var);
  }
  manifest["blobs"] = std::move(entries);
  manifest["digest"] = hex64(fnv1a64(blob.data(), blob.size()));

  const std::string text = manifest.dump();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("checkpoint: cannot write '" + tmp + "'");
    f.write(kMagic, sizeof kMagic);
    const uint64_t len = text.size();
    f.write(reinterpret_cast<const char*>(&len), sizeof len);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    f.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!f) throw Error("checkpoint: short write to '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

ResumeInfo checkpoint_load(const std::string& path, ModelGraph& graph, SgdState& opt) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("checkpoint: cannot open '" + path + "'");
  f.seekg(0, std::ios::end);
  const auto file_len = static_cast<uint64_t>(f.tellg());
  f.seekg(0);

  char magic[8];
  uint64_t text_len = 0;
  if (file_len < sizeof magic + sizeof text_len)
    throw Error("checkpoint: '" + path + "' is truncated");
  f.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw Error("checkpoint: '" + path + "' has the wrong magic");
  f.read(reinterpret_cast<char*>(&text_len), sizeof text_len);
  if (sizeof magic + sizeof text_len + text_len > file_len)
    throw Error("checkpoint: '" + path + "' is truncated (manifest)");
  std::string text(text_len, '\0');
  f.read(text.data(), static_cast<std::streamsize>(text_len));

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint: bad manifest in '" + path + "': " + e.what());
  }
  if (manifest.at("version").get<int>() != kVersion)
    throw Error("checkpoint: version mismatch (file has " +
                std::to_string(manifest.at("version").get<int>()) + ", expected " +
                std::to_string(kVersion) + ")");

  const auto& arch = manifest.at("arch");
  if (arch.at("name").get<std::string>() != graph.arch ||
      arch.at("depth_blocks").get<int>() != graph.depth_blocks ||
      arch.at("base_width").get<int>() != graph.base_width ||
      arch.at("num_classes").get<int>() != graph.num_classes)
    throw ConfigError("checkpoint: architecture mismatch (file: " +
                      arch.at("name").get<std::string>() + ", graph: " + graph.arch + ")");

  const uint64_t blob_len = file_len - sizeof magic - sizeof text_len - text_len;
  std::vector<uint8_t> blob(blob_len);
  f.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob_len));
  if (!f) throw Error("checkpoint: '" + path + "' is truncated (blob)");
  if (hex64(fnv1a64(blob.data(), blob.size())) != manifest.at("digest").get<std::string>())
    throw Error("checkpoint: digest mismatch in '" + path + "' — refusing to load");

  auto param_by_name = [&](const std::string& name) -> std::pair<Param*, size_t> {
    for (size_t pi = 0; pi < graph.params.size(); ++pi)
      if (graph.params[pi].name == name) return {&graph.params[pi], pi};
    throw Error("checkpoint: unknown parameter '" + name + "'");
  };
  auto layer_by_name = [&](const std::string& name) -> Layer& {
    for (Layer& l : graph.layers)
      if (l.kind == LayerKind::BatchNorm && l.name == name) return l;
    throw Error("checkpoint: unknown batchnorm layer '" + name + "'");
  };

  opt.attach(graph);
  for (const auto& e : manifest.at("blobs")) {
    const std::string kind = e.at("kind").get<std::string>();
    const std::string name = e.at("name").get<std::string>();
    const size_t offset = e.at("offset").get<size_t>();
    const size_t count = e.at("count").get<size_t>();
    const Shape shape = e.at("shape").get<Shape>();
    const size_t bytes = count * (e.at("dtype").get<std::string>() == "u8" ? 1 : 4);
    if (offset + bytes > blob.size())
      throw Error("checkpoint: blob entry '" + name + "' exceeds file");

    if (kind == "param" || kind == "velocity" || kind == "frozen") {
      auto [p, pi] = param_by_name(name);
      if (p->tensor.shape != shape)
        throw Error("checkpoint: shape mismatch for tensor '" + name + "' (file " +
                    shape_str(shape) + ", graph " + shape_str(p->tensor.shape) + ")");
      if (kind == "param") {
        std::memcpy(p->tensor.data.data(), blob.data() + offset, bytes);
      } else if (kind == "velocity") {
        std::memcpy(opt.velocity[pi].data(), blob.data() + offset, bytes);
      } else {
        p->frozen.assign(blob.begin() + static_cast<long>(offset),
                         blob.begin() + static_cast<long>(offset + count));
      }
    } else if (kind == "running_mean" || kind == "running_var") {
      Layer& l = layer_by_name(name);
      if (static_cast<size_t>(l.channels()) != count)
        throw Error("checkpoint: shape mismatch for running stats of '" + name + "'");
      std::vector<float>& dst = kind == "running_mean" ? l.running_mean : l.running_var;
      std::memcpy(dst.data(), blob.data() + offset, bytes);
    } else {
      throw Error("checkpoint: unknown blob kind '" + kind + "'");
    }
  }

  ResumeInfo info;
  const auto& sch = manifest.at("schedule");
  info.schedule.a_min = sch.at("a_min").get<double>();
  info.schedule.a_max = sch.at("a_max").get<double>();
  info.schedule.s = sch.at("s").get<long long>();
  info.schedule.s_final = sch.at("s_final").get<long long>();
  info.progress.next_epoch = manifest.at("progress").at("next_epoch").get<int>();
  info.progress.step = manifest.at("progress").at("step").get<long long>();
  info.seed = manifest.at("seed").get<uint64_t>();
  return info;
}

}  // namespace swdnet
