#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace alam {

// JSON-lines metric log. Scalar keys are emitted in sorted order and the
// records carry no wall-clock data, so two identical runs produce
// byte-identical files. Wall times go to a separate timings file that is
// excluded from the determinism contract.
class MetricsLog {
 public:
  MetricsLog() = default;
  explicit MetricsLog(const std::string& path);
  void append(int64_t step, const std::map<std::string, double>& scalars,
              const std::vector<std::string>& tags = {});

 private:
  std::ofstream out_;
};

class TimingLog {
 public:
  TimingLog() = default;
  explicit TimingLog(const std::string& path);
  void append(int64_t step, double wall_seconds);

 private:
  std::ofstream out_;
};

}  // namespace alam
