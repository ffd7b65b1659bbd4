#include "alam/metrics_log.hpp"

#include <json.hpp>

#include "alam/common.hpp"

namespace alam {

MetricsLog::MetricsLog(const std::string& path) : out_(path) {
  require(out_.good(), "metrics log: cannot open " + path);
}

void MetricsLog::append(int64_t step, const std::map<std::string, double>& scalars,
                        const std::vector<std::string>& tags) {
  nlohmann::json j;
  j["step"] = step;
  for (const auto& [k, v] : scalars) j[k] = v;
  if (!tags.empty()) j["tags"] = tags;
  out_ << j.dump() << "\n";
  out_.flush();
}

TimingLog::TimingLog(const std::string& path) : out_(path) {
  require(out_.good(), "timing log: cannot open " + path);
}

void TimingLog::append(int64_t step, double wall_seconds) {
  nlohmann::json j;
  j["step"] = step;
  j["wall_time"] = wall_seconds;
  out_ << j.dump() << "\n";
  out_.flush();
}

}  // namespace alam

