#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "alam/config.hpp"
#include "alam/synthworld.hpp"

namespace alam {

// One stored episode. Frames are either the stored float32 blobs or, when
// the dataset was written without frames, re-rendered on demand (the
// renderer is deterministic, so both paths agree bit for bit).
struct Episode {
  int index = 0;
  std::vector<WorldState> states;
  std::vector<ActionCmd> actions;
  bool has_success = false;
  bool success = false;
  std::array<std::vector<Frame>, kNumViews> stored_frames;
  WorldConfig world;

  int length() const { return static_cast<int>(states.size()); }
  Frame frame(View v, int t) const;
};

// Directory layout: manifest.json + episodes/ep_%05d.bin. Episode i of a
// dataset with seed s uses stream_seed(s, kind, i). Every 20th episode
// (i % 20 == 19) belongs to the held-out test split.
class Dataset {
 public:
  static constexpr const char* kSchema = "alam-dataset-v1";

  // Writes a full dataset; kind is "video" or "demo". demo episodes are
  // padded to at least min_frames frames with no-op actions.
  static void generate(const WorldConfig& world, const std::string& kind, int episodes,
                       uint64_t seed, const std::string& dir, int min_frames = 0);

  explicit Dataset(const std::string& dir);

  int size() const { return episodes_; }
  const std::string& kind() const { return kind_; }
  const WorldConfig& world() const { return world_; }
  uint64_t seed() const { return seed_; }
  const std::string& dir() const { return dir_; }

  static bool is_test_index(int i) { return i % 20 == 19; }
  std::vector<int> train_ids() const;
  std::vector<int> test_ids() const;

  Episode load(int i) const;

  // PNG export of the first n episodes' frames, for eyeballing.
  void export_pngs(const std::string& out_dir, int n_episodes) const;

 private:
  std::string dir_;
  std::string kind_;
  int episodes_ = 0;
  uint64_t seed_ = 0;
  bool store_frames_ = true;
  WorldConfig world_;
};

std::string episode_filename(int index);

}  // namespace alam
