#pragma once

// Flat key-value config files with [section] headers, used by every
// subcommand. The raw text is preserved so run directories can snapshot the
// exact bytes that were parsed.

#include <string>
#include <vector>

#include "resplat/fit.hpp"
#include "resplat/pipeline.hpp"
#include "resplat/restorer_train.hpp"

namespace resplat {

struct ConfigEntry {
  std::string section;
  std::string key;
  std::string value;
  int line = 0;
};

// Parsed config plus the verbatim source text. Lines are either blank, full
// line comments (#), section headers ([name]), or `key = value` pairs.
struct ConfigDoc {
  std::string path;  // for diagnostics
  std::string text;  // verbatim file contents
  std::vector<ConfigEntry> entries;

  bool has_section(const std::string& section) const;
};

ConfigDoc parse_config_file(const std::string& path);
ConfigDoc parse_config_text(const std::string& text, const std::string& name);

// Everything a subcommand can configure. Each `apply_*` consumes the matching
// sections; `check_consumed` then rejects any entry no applier claimed, so
// typos fail loudly with their line number.
struct CliSettings {
  RingRig rig;
  InitSpec init;
  FitConfig coarse_fit;
  FitConfig refine_fit;
  ModelConfig model;   // free knobs only; geometry comes from the data
  TrainConfig train;
  MaskMode mask_mode = MaskMode::kMaskedCyclic;
  int alternations = 1;
  int sample_steps = 20;
  uint64_t run_seed = 0;

  struct Cell {
    MaskMode mode = MaskMode::kMaskedCyclic;
    bool condition_on_coarse = true;
    std::string checkpoint;
    int line = 0;
  };
  std::vector<Cell> cells;  // [ablate] cell = <mode> <checkpoint> [no-coarse]
};

// Applies the sections relevant to a subcommand and rejects unknown keys.
// `sections` lists the section names the command accepts.
CliSettings apply_config(const ConfigDoc& doc,
                         const std::vector<std::string>& sections);

}  // namespace resplat
