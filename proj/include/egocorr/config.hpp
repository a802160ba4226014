#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace egocorr {

// Parameters shared by every stage. Defaults follow the published setup:
// 320x180 processing, 4 px sampling step, 1e-4 eigenvalue threshold,
// reseeding every 4 frames, trajectory lengths in [64, 1024], K = 64, P = 25.
struct PipelineConfig {
  int process_width = 320;
  int process_height = 180;
  int sample_step_e_w = 4;
  double gftt_min_eigenvalue = 1e-4;
  int resample_interval = 4;
  int l_min = 64;
  int l_max = 1024;
  int paa_pieces_k = 64;
  double top_percent_p = 25.0;
  int median_window = 5;
  double ransac_threshold = 1.0;
  int ransac_iterations = 500;
  double mask_threshold = 0.5;

  // Nearest-candidate radius of the targetness map; always 2 * e_W.
  int radius_r() const { return 2 * sample_step_e_w; }

  bool operator==(const PipelineConfig&) const = default;
};

// Throws ConfigError naming the violated constraint.
void validate(const PipelineConfig& config);

// Flat "key = value" text, '#' starts a comment. Unspecified keys keep their
// defaults. Errors name the offending line.
PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);

std::string format_config(const PipelineConfig& config);
void save_config(const PipelineConfig& config, const std::filesystem::path& path);

// Applies a single "key=value" override (the CLI's --set).
void apply_override(PipelineConfig& config, std::string_view assignment);

}  // namespace egocorr
