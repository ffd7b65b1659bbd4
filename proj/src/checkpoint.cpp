#include "alam/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

namespace alam {

namespace fs = std::filesystem;
using nlohmann::json;

RngState RngState::capture(const std::string& name, const Rng& rng) {
  RngState s;
  s.name = name;
  s.state = rng.state();
  s.has_spare = rng.has_spare();
  s.spare = rng.spare();
  return s;
}

void RngState::restore_into(Rng& rng) const { rng.restore(state, has_spare, spare); }

const Tensor* CheckpointData::find_extra(const std::string& name) const {
  for (const auto& [n, t] : extra)
    if (n == name) return &t;
  return nullptr;
}

namespace {

uint32_t crc_of(const Tensor& t) {
  return static_cast<uint32_t>(::crc32(0, reinterpret_cast<const Bytef*>(t.data.data()),
                                       static_cast<uInt>(t.data.size() * sizeof(double))));
}

struct BlobPlan {
  std::string name;
  const Tensor* tensor;
};

json blob_entry(const BlobPlan& b, size_t offset) {
  return json{{"name", b.name},
              {"dtype", "f64"},
              {"shape", b.tensor->shape},
              {"offset", offset},
              {"nbytes", b.tensor->data.size() * sizeof(double)},
              {"crc32", crc_of(*b.tensor)}};
}

}  // namespace

void save_checkpoint(const CheckpointData& data, const std::string& dir) {
  std::vector<BlobPlan> plan;
  for (const auto& e : data.params.entries()) {
    plan.push_back({"param/" + e.name, &e.value});
    plan.push_back({"adam_m/" + e.name, &e.m});
    plan.push_back({"adam_v/" + e.name, &e.v});
  }
  Tensor counts;
  if (data.has_codebook) {
    plan.push_back({"codebook/entries", &data.book.entries});
    plan.push_back({"codebook/ema_sums", &data.book.ema_sums});
    counts = Tensor({data.book.size(), 1});
    for (int i = 0; i < data.book.size(); ++i) counts.data[static_cast<size_t>(i)] = data.book.ema_counts[static_cast<size_t>(i)];
    plan.push_back({"codebook/ema_counts", &counts});
  }
  for (const auto& [name, t] : data.extra) plan.push_back({"extra/" + name, &t});

  json manifest;
  manifest["schema_version"] = data.schema_version;
  manifest["kind"] = data.kind;
  manifest["config"] = data.config;
  manifest["step"] = data.step;
  manifest["meta"] = data.meta.is_null() ? nlohmann::json::object() : data.meta;
  manifest["optimizer"] = {{"lr", data.opt.lr},       {"beta1", data.opt.beta1},
                           {"beta2", data.opt.beta2}, {"eps", data.opt.eps},
                           {"weight_decay", data.opt.weight_decay}, {"t", data.opt.t}};
  if (data.has_codebook)
    manifest["codebook"] = {{"decay", data.book.decay}, {"eps_count", data.book.eps_count}};
  json rngs = json::array();
  for (const auto& r : data.rng_states)
    rngs.push_back(json{{"name", r.name},
                        {"state", {r.state[0], r.state[1], r.state[2], r.state[3]}},
                        {"has_spare", r.has_spare},
                        {"spare", r.spare}});
  manifest["rng"] = rngs;
  json blobs = json::array();
  size_t offset = 0;
  for (const auto& b : plan) {
    blobs.push_back(blob_entry(b, offset));
    offset += b.tensor->data.size() * sizeof(double);
  }
  manifest["blobs"] = blobs;

  const fs::path target(dir);
  const fs::path tmp(dir + ".tmp");
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  {
    std::ofstream bf(tmp / "params.bin", std::ios::binary);
    require(bf.good(), "checkpoint: cannot write params.bin");
    for (const auto& b : plan)
      bf.write(reinterpret_cast<const char*>(b.tensor->data.data()),
               static_cast<std::streamsize>(b.tensor->data.size() * sizeof(double)));
    require(bf.good(), "checkpoint: blob write failed");
  }
  {
    std::ofstream mf(tmp / "manifest.json");
    require(mf.good(), "checkpoint: cannot write manifest.json");
    mf << manifest.dump(2) << "\n";
    require(mf.good(), "checkpoint: manifest write failed");
  }
  fs::remove_all(target);
  fs::rename(tmp, target);
}

CheckpointData load_checkpoint(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  require(mf.good(), "checkpoint: no manifest.json in " + dir);
  json manifest;
  mf >> manifest;

  CheckpointData data;
  data.schema_version = manifest.at("schema_version").get<int>();
  require(data.schema_version == 1, "checkpoint: unsupported schema version");
  data.kind = manifest.at("kind").get<std::string>();
  data.config = manifest.at("config");
  data.step = manifest.at("step").get<int64_t>();
  if (manifest.contains("meta")) data.meta = manifest.at("meta");
  const auto& opt = manifest.at("optimizer");
  data.opt.lr = opt.at("lr").get<double>();
  data.opt.beta1 = opt.at("beta1").get<double>();
  data.opt.beta2 = opt.at("beta2").get<double>();
  data.opt.eps = opt.at("eps").get<double>();
  data.opt.weight_decay = opt.at("weight_decay").get<double>();
  data.opt.t = opt.at("t").get<int64_t>();
  for (const auto& r : manifest.at("rng")) {
    RngState s;
    s.name = r.at("name").get<std::string>();
    for (int i = 0; i < 4; ++i) s.state[static_cast<size_t>(i)] = r.at("state")[static_cast<size_t>(i)].get<uint64_t>();
    s.has_spare = r.at("has_spare").get<bool>();
    s.spare = r.at("spare").get<double>();
    data.rng_states.push_back(s);
  }

  std::ifstream bf(fs::path(dir) / "params.bin", std::ios::binary);
  require(bf.good(), "checkpoint: no params.bin in " + dir);
  bf.seekg(0, std::ios::end);
  const size_t file_size = static_cast<size_t>(bf.tellg());

  auto read_blob = [&](const json& b) -> Tensor {
    const std::string name = b.at("name").get<std::string>();
    Tensor t(b.at("shape").get<std::vector<int>>());
    const size_t offset = b.at("offset").get<size_t>();
    const size_t nbytes = b.at("nbytes").get<size_t>();
    require(nbytes == t.data.size() * sizeof(double), "checkpoint: blob size mismatch: " + name);
    require(offset + nbytes <= file_size, "checkpoint: truncated blob: " + name);
    bf.seekg(static_cast<std::streamoff>(offset));
    bf.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(nbytes));
    require(bf.good(), "checkpoint: read failed for blob: " + name);
    const uint32_t crc = crc_of(t);
    require(crc == b.at("crc32").get<uint32_t>(), "checkpoint: checksum mismatch: " + name);
    return t;
  };

  // params come as param/ + adam_m/ + adam_v/ triples in registration order
  for (const auto& b : manifest.at("blobs")) {
    const std::string name = b.at("name").get<std::string>();
    if (name.rfind("param/", 0) == 0) {
      data.params.add(name.substr(6), read_blob(b));
    }
  }
  for (const auto& b : manifest.at("blobs")) {
    const std::string name = b.at("name").get<std::string>();
    if (name.rfind("adam_m/", 0) == 0) {
      data.params.entries()[static_cast<size_t>(data.params.find(name.substr(7)))].m = read_blob(b);
    } else if (name.rfind("adam_v/", 0) == 0) {
      data.params.entries()[static_cast<size_t>(data.params.find(name.substr(7)))].v = read_blob(b);
    } else if (name == "codebook/entries") {
      data.has_codebook = true;
      data.book.entries = read_blob(b);
    } else if (name == "codebook/ema_sums") {
      data.book.ema_sums = read_blob(b);
    } else if (name == "codebook/ema_counts") {
      const Tensor counts = read_blob(b);
      data.book.ema_counts.assign(counts.data.begin(), counts.data.end());
    } else if (name.rfind("extra/", 0) == 0) {
      data.extra.emplace_back(name.substr(6), read_blob(b));
    }
  }
  if (data.has_codebook) {
    data.book.decay = manifest.at("codebook").at("decay").get<double>();
    data.book.eps_count = manifest.at("codebook").at("eps_count").get<double>();
  }
  return data;
}

uint64_t file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "file_hash: cannot open " + path);
  uint64_t h = 0xCBF29CE484222325ULL;
  char buf[4096];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    const std::streamsize n = f.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ULL;
    }
    if (!f) break;
  }
  return h;
}

uint64_t checkpoint_hash(const std::string& dir) {
  uint64_t h = file_hash((fs::path(dir) / "manifest.json").string());
  h ^= file_hash((fs::path(dir) / "params.bin").string());
  return h;
}

}  // namespace alam

