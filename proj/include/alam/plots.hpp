#pragma once

#include <string>
#include <vector>

#include "alam/probes.hpp"

namespace alam {

// Emits the probe figure set into out_dir with deterministic names:
// add.svg and rev.svg (log y, unseen horizons shaded), plus six delta
// panels (direct/cumulative x psnr/ssim/perceptual) when reconstruction
// metrics are present. Several reports overlay as labeled series.
// Returns the emitted file names. Empty/malformed reports are rejected.
std::vector<std::string> emit_probe_plots(const std::vector<ProbeReport>& reports,
                                          const std::vector<std::string>& labels,
                                          const std::string& out_dir);

// Success-rate bar chart across intervention arms (or any labeled runs).
std::string emit_intervention_chart(const nlohmann::json& arms, const std::string& out_dir);

}  // namespace alam
