#include "alam/dataset.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "alam/png.hpp"

namespace alam {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Dtype : uint8_t { kF32 = 0, kF64 = 1, kI32 = 2 };
constexpr char kMagic[8] = {'A', 'L', 'A', 'M', 'E', 'P', '0', '1'};

struct ArrayHeader {
  std::string name;
  Dtype dtype;
  std::vector<uint32_t> dims;
  size_t elems() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
};

void write_bytes(std::ofstream& f, const void* p, size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <class T>
void write_array(std::ofstream& f, const std::string& name, Dtype dt,
                 const std::vector<uint32_t>& dims, const T* data) {
  const uint8_t name_len = static_cast<uint8_t>(name.size());
  write_bytes(f, &name_len, 1);
  write_bytes(f, name.data(), name.size());
  const uint8_t dtype = dt;
  write_bytes(f, &dtype, 1);
  const uint8_t ndim = static_cast<uint8_t>(dims.size());
  write_bytes(f, &ndim, 1);
  for (uint32_t d : dims) write_bytes(f, &d, 4);
  size_t n = 1;
  for (uint32_t d : dims) n *= d;
  write_bytes(f, data, n * sizeof(T));
}

struct EpisodeFile {
  std::vector<std::pair<ArrayHeader, std::vector<char>>> arrays;

  const std::vector<char>* find(const std::string& name, ArrayHeader* hdr) const {
    for (const auto& [h, payload] : arrays) {
      if (h.name == name) {
        if (hdr) *hdr = h;
        return &payload;
      }
    }
    return nullptr;
  }
};

EpisodeFile read_episode_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "dataset: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  require(f.good() && std::memcmp(magic, kMagic, 8) == 0, "dataset: bad magic in " + path);
  uint32_t n_arrays = 0;
  f.read(reinterpret_cast<char*>(&n_arrays), 4);
  EpisodeFile out;
  for (uint32_t i = 0; i < n_arrays; ++i) {
    ArrayHeader h;
    uint8_t name_len = 0, dtype = 0, ndim = 0;
    f.read(reinterpret_cast<char*>(&name_len), 1);
    h.name.resize(name_len);
    f.read(h.name.data(), name_len);
    f.read(reinterpret_cast<char*>(&dtype), 1);
    h.dtype = static_cast<Dtype>(dtype);
    f.read(reinterpret_cast<char*>(&ndim), 1);
    h.dims.resize(ndim);
    for (auto& d : h.dims) f.read(reinterpret_cast<char*>(&d), 4);
    const size_t elem_size = h.dtype == kF64 ? 8 : 4;
    std::vector<char> payload(h.elems() * elem_size);
    f.read(payload.data(), static_cast<std::streamsize>(payload.size()));
    require(f.good(), "dataset: truncated array '" + h.name + "' in " + path);
    out.arrays.emplace_back(std::move(h), std::move(payload));
  }
  return out;
}

void write_episode_file(const std::string& path, const Trajectory& traj, bool store_frames,
                        bool has_success, bool success) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "dataset: cannot create " + path);
  write_bytes(f, kMagic, 8);
  const int T = traj.length();
  uint32_t n_arrays = 4 + (has_success ? 1 : 0) + (store_frames ? kNumViews : 0);
  write_bytes(f, &n_arrays, 4);

  std::vector<double> agent(static_cast<size_t>(T) * 2);
  for (int t = 0; t < T; ++t) {
    agent[static_cast<size_t>(t) * 2] = traj.states[static_cast<size_t>(t)].agent.x;
    agent[static_cast<size_t>(t) * 2 + 1] = traj.states[static_cast<size_t>(t)].agent.y;
  }
  write_array(f, "agent", kF64, {static_cast<uint32_t>(T), 2}, agent.data());

  const double goal[2] = {traj.states[0].goal.x, traj.states[0].goal.y};
  write_array(f, "goal", kF64, {2}, goal);

  const auto& ds = traj.states[0].distractors;
  std::vector<double> dis(ds.size() * 4);
  for (size_t i = 0; i < ds.size(); ++i) {
    dis[i * 4] = static_cast<double>(ds[i].shape);
    dis[i * 4 + 1] = ds[i].pos.x;
    dis[i * 4 + 2] = ds[i].pos.y;
    dis[i * 4 + 3] = ds[i].size;
  }
  write_array(f, "distractors", kF64, {static_cast<uint32_t>(ds.size()), 4}, dis.data());

  std::vector<double> act(static_cast<size_t>(T - 1) * 2);
  for (int t = 0; t + 1 < T; ++t) {
    act[static_cast<size_t>(t) * 2] = traj.actions[static_cast<size_t>(t)].u.x;
    act[static_cast<size_t>(t) * 2 + 1] = traj.actions[static_cast<size_t>(t)].u.y;
  }
  write_array(f, "actions", kF64, {static_cast<uint32_t>(T - 1), 2}, act.data());

  if (has_success) {
    const int32_t s = success ? 1 : 0;
    write_array(f, "success", kI32, {1}, &s);
  }
  if (store_frames) {
    for (int v = 0; v < kNumViews; ++v) {
      const auto& frames = traj.frames[static_cast<size_t>(v)];
      require(static_cast<int>(frames.size()) == T, "dataset: frame count mismatch");
      const int H = frames[0].h, W = frames[0].w, C = frames[0].c;
      std::vector<float> blob(static_cast<size_t>(T) * H * W * C);
      for (int t = 0; t < T; ++t)
        std::memcpy(blob.data() + static_cast<size_t>(t) * H * W * C,
                    frames[static_cast<size_t>(t)].px.data(),
                    sizeof(float) * frames[static_cast<size_t>(t)].px.size());
      const std::string name = v == 0 ? "frames_global" : "frames_wrist";
      write_array(f, name, kF32,
                  {static_cast<uint32_t>(T), static_cast<uint32_t>(H), static_cast<uint32_t>(W),
                   static_cast<uint32_t>(C)},
                  blob.data());
    }
  }
  require(f.good(), "dataset: write failed for " + path);
}

}  // namespace

std::string episode_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ep_%05d.bin", index);
  return buf;
}

Frame Episode::frame(View v, int t) const {
  require(t >= 0 && t < length(), "Episode::frame: index out of range");
  const auto& stored = stored_frames[static_cast<size_t>(v)];
  if (!stored.empty()) return stored[static_cast<size_t>(t)];
  return render_view(states[static_cast<size_t>(t)], v, world.resolution, world);
}

void Dataset::generate(const WorldConfig& world, const std::string& kind, int episodes,
                       uint64_t seed, const std::string& dir, int min_frames) {
  require(kind == "video" || kind == "demo", "dataset: kind must be video|demo");
  require(episodes >= 1, "dataset: need at least one episode");
  fs::create_directories(fs::path(dir) / "episodes");

  int successes = 0;
  for (int i = 0; i < episodes; ++i) {
    const uint64_t ep_seed = stream_seed(seed, kind, static_cast<uint64_t>(i));
    const std::string path = (fs::path(dir) / "episodes" / episode_filename(i)).string();
    if (kind == "video") {
      Trajectory traj = sample_trajectory(ep_seed, world.traj_len, world, world.store_frames);
      write_episode_file(path, traj, world.store_frames, false, false);
    } else {
      ExpertEpisode ep = generate_expert_episode(ep_seed, world, world.store_frames, min_frames);
      write_episode_file(path, ep.traj, world.store_frames, true, ep.success);
      successes += ep.success ? 1 : 0;
    }
  }

  json manifest;
  manifest["schema"] = kSchema;
  manifest["kind"] = kind;
  manifest["seed"] = seed;
  manifest["episodes"] = episodes;
  manifest["store_frames"] = world.store_frames;
  manifest["world"] = world_to_json(world);
  manifest["min_frames"] = min_frames;
  manifest["split_rule"] = "test iff index % 20 == 19";
  std::vector<int> test_ids;
  for (int i = 0; i < episodes; ++i)
    if (is_test_index(i)) test_ids.push_back(i);
  manifest["test_ids"] = test_ids;
  if (kind == "demo") manifest["expert_successes"] = successes;

  std::ofstream mf(fs::path(dir) / "manifest.json");
  require(mf.good(), "dataset: cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";
}

Dataset::Dataset(const std::string& dir) : dir_(dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  require(mf.good(), "dataset: no manifest.json in " + dir);
  json manifest;
  mf >> manifest;
  require(manifest.value("schema", "") == kSchema, "dataset: unsupported schema in " + dir);
  kind_ = manifest.at("kind").get<std::string>();
  episodes_ = manifest.at("episodes").get<int>();
  seed_ = manifest.at("seed").get<uint64_t>();
  store_frames_ = manifest.at("store_frames").get<bool>();
  world_ = world_from_json(manifest.at("world"), "world.");
}

std::vector<int> Dataset::train_ids() const {
  std::vector<int> out;
  for (int i = 0; i < episodes_; ++i)
    if (!is_test_index(i)) out.push_back(i);
  return out;
}

std::vector<int> Dataset::test_ids() const {
  std::vector<int> out;
  for (int i = 0; i < episodes_; ++i)
    if (is_test_index(i)) out.push_back(i);
  return out;
}

Episode Dataset::load(int i) const {
  require(i >= 0 && i < episodes_, "dataset: episode index out of range");
  const std::string path = (fs::path(dir_) / "episodes" / episode_filename(i)).string();
  EpisodeFile file = read_episode_file(path);

  Episode ep;
  ep.index = i;
  ep.world = world_;

  ArrayHeader hdr;
  const auto* agent = file.find("agent", &hdr);
  require(agent != nullptr && hdr.dims.size() == 2, "dataset: missing agent array in " + path);
  const int T = static_cast<int>(hdr.dims[0]);
  const double* ag = reinterpret_cast<const double*>(agent->data());

  const auto* goal = file.find("goal", nullptr);
  require(goal != nullptr, "dataset: missing goal array");
  const double* gl = reinterpret_cast<const double*>(goal->data());

  ArrayHeader dh;
  const auto* dis = file.find("distractors", &dh);
  require(dis != nullptr, "dataset: missing distractors array");
  const double* dd = reinterpret_cast<const double*>(dis->data());
  std::vector<Distractor> distractors(dh.dims[0]);
  for (size_t k = 0; k < distractors.size(); ++k) {
    distractors[k].shape = static_cast<int>(dd[k * 4]);
    distractors[k].pos = {dd[k * 4 + 1], dd[k * 4 + 2]};
    distractors[k].size = dd[k * 4 + 3];
  }

  ep.states.resize(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    auto& s = ep.states[static_cast<size_t>(t)];
    s.agent = {ag[t * 2], ag[t * 2 + 1]};
    s.goal = {gl[0], gl[1]};
    s.distractors = distractors;
    s.step_index = t;
  }

  ArrayHeader ah;
  const auto* act = file.find("actions", &ah);
  require(act != nullptr, "dataset: missing actions array");
  const double* ad = reinterpret_cast<const double*>(act->data());
  ep.actions.resize(ah.dims[0]);
  for (size_t t = 0; t < ep.actions.size(); ++t) ep.actions[t].u = {ad[t * 2], ad[t * 2 + 1]};
  require(static_cast<int>(ep.actions.size()) + 1 == T, "dataset: action/state length mismatch");

  if (const auto* sc = file.find("success", nullptr)) {
    ep.has_success = true;
    ep.success = *reinterpret_cast<const int32_t*>(sc->data()) != 0;
  }

  const char* frame_names[kNumViews] = {"frames_global", "frames_wrist"};
  for (int v = 0; v < kNumViews; ++v) {
    ArrayHeader fh;
    const auto* blob = file.find(frame_names[v], &fh);
    if (!blob) continue;
    require(fh.dims.size() == 4 && static_cast<int>(fh.dims[0]) == T,
            "dataset: bad frame blob shape");
    const int H = static_cast<int>(fh.dims[1]), W = static_cast<int>(fh.dims[2]),
              C = static_cast<int>(fh.dims[3]);
    const float* fp = reinterpret_cast<const float*>(blob->data());
    auto& frames = ep.stored_frames[static_cast<size_t>(v)];
    frames.reserve(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
      Frame fr(H, W, C, static_cast<View>(v));
      std::memcpy(fr.px.data(), fp + static_cast<size_t>(t) * H * W * C,
                  sizeof(float) * fr.px.size());
      frames.push_back(std::move(fr));
    }
  }
  return ep;
}

void Dataset::export_pngs(const std::string& out_dir, int n_episodes) const {
  fs::create_directories(out_dir);
  const int n = std::min(n_episodes, episodes_);
  for (int i = 0; i < n; ++i) {
    Episode ep = load(i);
    for (int v = 0; v < kNumViews; ++v)
      for (int t = 0; t < ep.length(); ++t) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "ep%04d_%s_t%03d.png", i,
                      view_name(static_cast<View>(v)), t);
        write_png((fs::path(out_dir) / buf).string(), ep.frame(static_cast<View>(v), t));
      }
  }
}

}  // namespace alam

