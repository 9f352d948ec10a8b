#include "advdet/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace advdet::models {

static_assert(std::endian::native == std::endian::little, "checkpoint payload is little-endian");

namespace {

constexpr char kMagic[7] = {'A', 'A', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

nlohmann::json arch_to_json(const ArchSpec& s) {
  nlohmann::json j;
  j["kind"] = s.kind == ArchKind::MnistConv ? "mnist-conv" : "mlp";
  j["mlp_widths"] = s.mlp_widths;
  j["output_width"] = s.output_width;
  return j;
}

ArchSpec arch_from_json(const nlohmann::json& j) {
  ArchSpec s;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "mnist-conv")
    s.kind = ArchKind::MnistConv;
  else if (kind == "mlp")
    s.kind = ArchKind::Mlp;
  else
    throw std::runtime_error("checkpoint: unknown arch kind " + kind);
  s.mlp_widths = j.at("mlp_widths").get<std::vector<int>>();
  s.output_width = j.at("output_width").get<int>();
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& m, const nlohmann::json& meta) {
  nlohmann::json header;
  header["arch"] = arch_to_json(m.spec);
  header["meta"] = meta;
  auto& plist = header["params"] = nlohmann::json::array();
  for (const auto& [name, t] : m.params) {
    nlohmann::json p;
    p["name"] = name;
    p["shape"] = t.shape();
    plist.push_back(p);
  }
  const std::string hs = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + tmp);
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t ver = kVersion;
    out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
    const std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : m.params)
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.values().size() * sizeof(double)));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("checkpoint: rename to " + path + " failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);

  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t ver = 0;
  in.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  if (!in || ver != kVersion) throw std::runtime_error("checkpoint: unsupported version in " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in) throw std::runtime_error("checkpoint: truncated header length in " + path);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("checkpoint: truncated header in " + path);

  nlohmann::json header = nlohmann::json::parse(hs);
  Checkpoint ck;
  ck.model.spec = arch_from_json(header.at("arch"));
  ck.meta = header.value("meta", nlohmann::json::object());
  for (const auto& p : header.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    const nn::Shape shape = p.at("shape").get<nn::Shape>();
    std::vector<double> vals(static_cast<std::size_t>(nn::shape_numel(shape)));
    in.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(vals.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated payload for " + name + " in " + path);
    ck.model.params.emplace_back(name, nn::Tensor::from(shape, std::move(vals)));
  }
  return ck;
}

}  // namespace advdet::models
