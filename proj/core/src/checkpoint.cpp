#include "dfi/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "dfi/config.hpp"
#include "dfi/error.hpp"
#include "json.hpp"

namespace dfi {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'F', 'I', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint " + path.string());
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  nlohmann::json header;
  header["model"] = nlohmann::json::parse(model_config_to_json(model.config()));
  if (!meta.run_config_json.empty()) header["run"] = nlohmann::json::parse(meta.run_config_json);
  header["step"] = meta.step;
  header["epoch"] = meta.epoch;
  header["seed"] = meta.seed;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto& items = model.parameters().items();
  put<uint32_t>(out, static_cast<uint32_t>(items.size()));
  for (const Parameter& p : items) {
    put<uint32_t>(out, static_cast<uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Tensor& v = p.var.value();
    put<uint32_t>(out, static_cast<uint32_t>(v.rank()));
    for (int64_t d : v.shape()) put<int64_t>(out, d);
    for (double x : v.values()) put<float>(out, static_cast<float>(x));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("not a checkpoint file: " + path.string());
  const auto header_len = get<uint64_t>(in, path);
  if (header_len > (uint64_t{1} << 30)) throw IoError("corrupt checkpoint header in " + path.string());
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw IoError("truncated checkpoint " + path.string());

  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(text);
    ck.meta.model = model_config_from_json(header.at("model").dump());
    if (header.contains("run")) ck.meta.run_config_json = header.at("run").dump(2);
    ck.meta.step = header.at("step").get<int64_t>();
    ck.meta.epoch = header.at("epoch").get<int>();
    ck.meta.seed = header.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint header in " + path.string() + ": " + e.what());
  }

  const auto count = get<uint32_t>(in, path);
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor e;
    const auto name_len = get<uint32_t>(in, path);
    e.name.resize(name_len);
    in.read(e.name.data(), name_len);
    const auto rank = get<uint32_t>(in, path);
    Shape shape;
    for (uint32_t k = 0; k < rank; ++k) shape.push_back(get<int64_t>(in, path));
    std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
    for (double& v : values) v = static_cast<double>(get<float>(in, path));
    e.value = Tensor(shape, std::move(values));
    ck.entries.push_back(std::move(e));
  }
  return ck;
}

void load_parameters(Model& model, const Checkpoint& checkpoint) {
  std::set<std::string> seen;
  for (const NamedTensor& e : checkpoint.entries) {
    Parameter* p = model.parameters().find(e.name);
    if (!p) throw IoError("checkpoint entry '" + e.name + "' has no matching parameter");
    if (p->var.value().shape() != e.value.shape()) {
      throw IoError("checkpoint entry '" + e.name + "' has shape " + shape_to_string(e.value.shape()) +
                    ", parameter expects " + shape_to_string(p->var.value().shape()));
    }
    p->var.mutable_value() = e.value;
    seen.insert(e.name);
  }
  for (const Parameter& p : model.parameters().items()) {
    if (!seen.count(p.name)) throw IoError("checkpoint lacks parameter '" + p.name + "'");
  }
}

std::unique_ptr<Model> load_model(const std::filesystem::path& path, CheckpointMeta* meta) {
  const Checkpoint ck = read_checkpoint(path);
  auto model = std::make_unique<Model>(ck.meta.model);
  load_parameters(*model, ck);
  if (meta) *meta = ck.meta;
  return model;
}

}  // namespace dfi
