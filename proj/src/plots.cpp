#include "alam/plots.hpp"

#include <filesystem>

#include "alam/svg.hpp"

namespace alam {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Series series_from(const json& column, const std::vector<int>& multiples, int stride,
                   const std::string& label) {
  Series s;
  s.label = label;
  for (int m : multiples) {
    s.x.push_back(static_cast<double>(m * stride));
    s.y.push_back(column.at(std::to_string(m)).get<double>());
  }
  return s;
}

}  // namespace

std::vector<std::string> emit_probe_plots(const std::vector<ProbeReport>& reports,
                                          const std::vector<std::string>& labels,
                                          const std::string& out_dir) {
  require(!reports.empty(), "emit_probe_plots: no reports");
  require(labels.size() == reports.size(), "emit_probe_plots: label/report count mismatch");
  for (const auto& r : reports)
    require(r.j.contains("add") && r.j.contains("rev"), "emit_probe_plots: empty report");

  const auto& first = reports[0].j;
  const int stride = first.at("stride").get<int>();
  const std::vector<int> multiples = first.at("multiples").get<std::vector<int>>();
  // shading starts at the first unsupervised multiple
  const std::vector<int> supervised = first.at("supervised").get<std::vector<int>>();
  int first_unseen = multiples.back() + 1;
  for (int m : multiples)
    if (std::find(supervised.begin(), supervised.end(), m) == supervised.end()) {
      first_unseen = m;
      break;
    }

  fs::create_directories(out_dir);
  std::vector<std::string> files;
  auto emit_lines = [&](const std::string& key, const std::string& title, bool log_y,
                        const std::string& file) {
    LinePlotSpec spec;
    spec.title = title;
    spec.xlabel = "horizon t (frames)";
    spec.ylabel = log_y ? title + " (log)" : title;
    spec.log_y = log_y;
    spec.shade = true;
    spec.shade_from_x = static_cast<double>(first_unseen * stride);
    for (size_t i = 0; i < reports.size(); ++i)
      spec.series.push_back(series_from(reports[i].j.at(key), multiples, stride, labels[i]));
    const std::string path = (fs::path(out_dir) / file).string();
    write_line_plot(spec, path);
    files.push_back(path);
  };

  emit_lines("add", "additivity error Add(t)", true, "add.svg");
  emit_lines("rev", "reversibility error Rev(t)", true, "rev.svg");

  if (first.contains("delta_direct")) {
    for (const std::string regime : {"direct", "cumulative"}) {
      const json& delta = first.at("delta_" + regime);
      for (auto it = delta.begin(); it != delta.end(); ++it) {
        const std::string metric = it.key();
        LinePlotSpec spec;
        spec.title = "delta " + metric + " (" + regime + ")";
        spec.xlabel = "horizon t (frames)";
        spec.ylabel = "delta from own t=k score";
        spec.shade = true;
        spec.shade_from_x = static_cast<double>(first_unseen * stride);
        for (size_t i = 0; i < reports.size(); ++i)
          spec.series.push_back(series_from(reports[i].j.at("delta_" + regime).at(metric),
                                            multiples, stride, labels[i]));
        const std::string path =
            (fs::path(out_dir) / ("delta_" + regime + "_" + metric + ".svg")).string();
        write_line_plot(spec, path);
        files.push_back(path);
      }
    }
  }
  return files;
}

std::string emit_intervention_chart(const json& arms, const std::string& out_dir) {
  require(arms.is_array() && !arms.empty(), "emit_intervention_chart: empty arm list");
  BarChartSpec spec;
  spec.title = "success rate by intervention arm";
  spec.ylabel = "success rate";
  for (const auto& arm : arms) {
    spec.bars.emplace_back(arm.at("intervention").get<std::string>(),
                           arm.at("success_rate").get<double>());
    if (arm.contains("ci95"))
      spec.error_bars.emplace_back(arm.at("ci95")[0].get<double>(),
                                   arm.at("ci95")[1].get<double>());
  }
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / "interventions.svg").string();
  write_bar_chart(spec, path);
  return path;
}

}  // namespace alam

