#include "crossview/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "crossview/errors.hpp"

namespace crossview {

namespace {

constexpr char kMagic[8] = {'X', 'V', 'C', 'P', '0', '0', '0', '1'};

std::size_t byte_size(const NamedArray& a) {
  return a.dtype == "f32" ? a.f32.size() * sizeof(float) : a.f64.size() * sizeof(double);
}

}  // namespace

void Checkpoint::add(const std::string& name, const Tensor<float>& t) {
  NamedArray a;
  a.name = name;
  a.dtype = "f32";
  a.shape = t.shape();
  a.f32.assign(t.data(), t.data() + t.numel());
  arrays.push_back(std::move(a));
}

void Checkpoint::add(const std::string& name, const Tensor<double>& t) {
  NamedArray a;
  a.name = name;
  a.dtype = "f64";
  a.shape = t.shape();
  a.f64.assign(t.data(), t.data() + t.numel());
  arrays.push_back(std::move(a));
}

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const NamedArray& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

template <>
Tensor<float> Checkpoint::tensor<float>(const std::string& name) const {
  const NamedArray* a = find(name);
  if (!a) throw CheckpointError("checkpoint: missing array '" + name + "'");
  if (a->dtype != "f32") throw CheckpointError("checkpoint: '" + name + "' is not f32");
  return Tensor<float>(a->shape, a->f32);
}

template <>
Tensor<double> Checkpoint::tensor<double>(const std::string& name) const {
  const NamedArray* a = find(name);
  if (!a) throw CheckpointError("checkpoint: missing array '" + name + "'");
  if (a->dtype != "f64") throw CheckpointError("checkpoint: '" + name + "' is not f64");
  return Tensor<double>(a->shape, a->f64);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["epoch"] = ckpt.epoch;
  header["config"] = nlohmann::json::parse(ckpt.config_json.empty() ? "{}" : ckpt.config_json);
  header["counters"] = ckpt.counters;
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const NamedArray& a : ckpt.arrays) {
    nlohmann::ordered_json rec;
    rec["name"] = a.name;
    rec["dtype"] = a.dtype;
    rec["shape"] = a.shape;
    rec["offset"] = offset;
    table.push_back(std::move(rec));
    offset += byte_size(a);
  }
  header["arrays"] = std::move(table);
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const NamedArray& a : ckpt.arrays) {
    if (a.dtype == "f32") {
      out.write(reinterpret_cast<const char*>(a.f32.data()),
                static_cast<std::streamsize>(a.f32.size() * sizeof(float)));
    } else {
      out.write(reinterpret_cast<const char*>(a.f64.data()),
                static_cast<std::streamsize>(a.f64.size() * sizeof(double)));
    }
  }
  if (!out) throw IoError("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("load_checkpoint: bad magic in " + path.string());
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw CheckpointError("load_checkpoint: truncated header in " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(std::string("load_checkpoint: corrupt header: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.epoch = header.at("epoch").get<int>();
  ckpt.config_json = header.at("config").dump();
  if (header.contains("counters")) {
    for (auto it = header["counters"].begin(); it != header["counters"].end(); ++it) {
      ckpt.counters[it.key()] = it.value().get<std::int64_t>();
    }
  }
  for (const auto& rec : header.at("arrays")) {
    NamedArray a;
    a.name = rec.at("name").get<std::string>();
    a.dtype = rec.at("dtype").get<std::string>();
    a.shape = rec.at("shape").get<std::vector<std::int64_t>>();
    const std::int64_t numel = Tensor<float>::count(a.shape);
    if (a.dtype == "f32") {
      a.f32.resize(static_cast<std::size_t>(numel));
      in.read(reinterpret_cast<char*>(a.f32.data()),
              static_cast<std::streamsize>(a.f32.size() * sizeof(float)));
    } else if (a.dtype == "f64") {
      a.f64.resize(static_cast<std::size_t>(numel));
      in.read(reinterpret_cast<char*>(a.f64.data()),
              static_cast<std::streamsize>(a.f64.size() * sizeof(double)));
    } else {
      throw CheckpointError("load_checkpoint: unknown dtype '" + a.dtype + "'");
    }
    if (!in) throw CheckpointError("load_checkpoint: truncated payload in " + path.string());
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

}  // namespace crossview
