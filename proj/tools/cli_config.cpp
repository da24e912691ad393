#include "cli_config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "resplat/common.hpp"
#include "resplat/synthetic.hpp"

namespace resplat {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const ConfigDoc& doc, int line, const std::string& msg) {
  throw ConfigError(doc.path + " line " + std::to_string(line) + ": " + msg);
}

[[noreturn]] void fail(const ConfigDoc& doc, const ConfigEntry& e,
                       const std::string& msg) {
  fail(doc, e.line, "[" + e.section + "] " + e.key + ": " + msg);
}

long long parse_int(const ConfigDoc& doc, const ConfigEntry& e) {
  char* end = nullptr;
  const long long v = std::strtoll(e.value.c_str(), &end, 10);
  if (end == e.value.c_str() || *end != '\0')
    fail(doc, e, "expected an integer, got '" + e.value + "'");
  return v;
}

double parse_double(const ConfigDoc& doc, const ConfigEntry& e) {
  char* end = nullptr;
  const double v = std::strtod(e.value.c_str(), &end);
  if (end == e.value.c_str() || *end != '\0')
    fail(doc, e, "expected a number, got '" + e.value + "'");
  return v;
}

uint64_t parse_seed(const ConfigDoc& doc, const ConfigEntry& e) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(e.value.c_str(), &end, 10);
  if (end == e.value.c_str() || *end != '\0' || e.value.find('-') != std::string::npos)
    fail(doc, e, "expected a non-negative integer, got '" + e.value + "'");
  return v;
}

bool parse_bool(const ConfigDoc& doc, const ConfigEntry& e) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  fail(doc, e, "expected true or false, got '" + e.value + "'");
}

MaskMode parse_mode(const ConfigDoc& doc, const ConfigEntry& e,
                    const std::string& text) {
  try {
    return mask_mode_from_string(text);
  } catch (const ConfigError& err) {
    fail(doc, e, err.what());
  }
}

}  // namespace

bool ConfigDoc::has_section(const std::string& section) const {
  return std::any_of(entries.begin(), entries.end(),
                     [&](const ConfigEntry& e) { return e.section == section; });
}

ConfigDoc parse_config_text(const std::string& text, const std::string& name) {
  ConfigDoc doc;
  doc.path = name;
  doc.text = text;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        fail(doc, line_no, "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) fail(doc, line_no, "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(doc, line_no, "expected 'key = value', got '" + line + "'");
    ConfigEntry e;
    e.section = section;
    e.key = trim(line.substr(0, eq));
    e.value = trim(line.substr(eq + 1));
    e.line = line_no;
    if (e.key.empty()) fail(doc, line_no, "missing key before '='");
    if (e.section.empty())
      fail(doc, line_no, "key '" + e.key + "' appears before any [section]");
    doc.entries.push_back(std::move(e));
  }
  return doc;
}

ConfigDoc parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

CliSettings apply_config(const ConfigDoc& doc,
                         const std::vector<std::string>& sections) {
  CliSettings s;
  s.rig = mannequin_rig();
  const std::set<std::string> allowed(sections.begin(), sections.end());

  for (const ConfigEntry& e : doc.entries) {
    if (!allowed.count(e.section))
      fail(doc, e.line,
           "unknown section [" + e.section + "] for this command");

    if (e.section == "rig") {
      if (e.key == "n_views") s.rig.n_views = int(parse_int(doc, e));
      else if (e.key == "radius") s.rig.radius = parse_double(doc, e);
      else if (e.key == "elevation") s.rig.elevation = parse_double(doc, e);
      else if (e.key == "focal") s.rig.focal = parse_double(doc, e);
      else if (e.key == "width") s.rig.width = int(parse_int(doc, e));
      else if (e.key == "height") s.rig.height = int(parse_int(doc, e));
      else if (e.key == "target_height") s.rig.target[1] = parse_double(doc, e);
      else fail(doc, e, "unknown key");
    } else if (e.section == "init") {
      if (e.key == "count") s.init.count = int(parse_int(doc, e));
      else if (e.key == "seed") s.init.seed = parse_seed(doc, e);
      else if (e.key == "height") s.init.height = parse_double(doc, e);
      else if (e.key == "radius") s.init.radius = parse_double(doc, e);
      else if (e.key == "opacity") s.init.opacity = parse_double(doc, e);
      else if (e.key == "scale_factor") s.init.scale_factor = parse_double(doc, e);
      else fail(doc, e, "unknown key");
    } else if (e.section == "coarse_fit" || e.section == "refine_fit") {
      FitConfig& f = e.section == "coarse_fit" ? s.coarse_fit : s.refine_fit;
      if (e.key == "iterations") f.iterations = int(parse_int(doc, e));
      else if (e.key == "lr") f.lr = parse_double(doc, e);
      else if (e.key == "lr_position_scale") f.lr_position_scale = parse_double(doc, e);
      else if (e.key == "l2_weight") f.l2_weight = parse_double(doc, e);
      else if (e.key == "ssim_weight") f.ssim_weight = parse_double(doc, e);
      else if (e.key == "ssim_window") f.ssim_window = int(parse_int(doc, e));
      else if (e.key == "loss_tol") f.loss_tol = parse_double(doc, e);
      else if (e.key == "log_every") f.log_every = int(parse_int(doc, e));
      else fail(doc, e, "unknown key");
    } else if (e.section == "model") {
      if (e.key == "width") s.model.width = int(parse_int(doc, e));
      else if (e.key == "depth") s.model.depth = int(parse_int(doc, e));
      else if (e.key == "heads") s.model.heads = int(parse_int(doc, e));
      else if (e.key == "ref_token_count") s.model.ref_token_count = int(parse_int(doc, e));
      else if (e.key == "max_frames") s.model.max_frames = int(parse_int(doc, e));
      else if (e.key == "sigma_data") s.model.sigma_data = parse_double(doc, e);
      else if (e.key == "condition_on_coarse")
        s.model.condition_on_coarse = parse_bool(doc, e);
      else fail(doc, e, "unknown key");
    } else if (e.section == "train") {
      if (e.key == "steps") s.train.steps = int(parse_int(doc, e));
      else if (e.key == "batch_size") s.train.batch_size = int(parse_int(doc, e));
      else if (e.key == "lr") s.train.lr = parse_double(doc, e);
      else if (e.key == "beta1") s.train.beta1 = parse_double(doc, e);
      else if (e.key == "beta2") s.train.beta2 = parse_double(doc, e);
      else if (e.key == "eps") s.train.eps = parse_double(doc, e);
      else if (e.key == "grad_clip") s.train.grad_clip = parse_double(doc, e);
      else if (e.key == "p_mean") s.train.p_mean = parse_double(doc, e);
      else if (e.key == "p_std") s.train.p_std = parse_double(doc, e);
      else if (e.key == "seed") s.train.seed = parse_seed(doc, e);
      else if (e.key == "mask_mode") s.mask_mode = parse_mode(doc, e, e.value);
      else fail(doc, e, "unknown key");
    } else if (e.section == "run") {
      if (e.key == "mask_mode") s.mask_mode = parse_mode(doc, e, e.value);
      else if (e.key == "alternations") s.alternations = int(parse_int(doc, e));
      else if (e.key == "sample_steps") s.sample_steps = int(parse_int(doc, e));
      else if (e.key == "seed") s.run_seed = parse_seed(doc, e);
      else fail(doc, e, "unknown key");
    } else if (e.section == "ablate") {
      if (e.key == "cell") {
        std::istringstream cs(e.value);
        std::string mode_text, ckpt, extra;
        cs >> mode_text >> ckpt;
        if (mode_text.empty() || ckpt.empty())
          fail(doc, e, "expected '<mask-mode> <checkpoint> [no-coarse]'");
        CliSettings::Cell cell;
        cell.mode = parse_mode(doc, e, mode_text);
        cell.checkpoint = ckpt;
        cell.line = e.line;
        if (cs >> extra) {
          if (extra != "no-coarse")
            fail(doc, e, "unknown cell flag '" + extra + "'");
          cell.condition_on_coarse = false;
        }
        if (cs >> extra) fail(doc, e, "trailing text '" + extra + "'");
        s.cells.push_back(std::move(cell));
      } else if (e.key == "sample_steps")
        s.sample_steps = int(parse_int(doc, e));
      else if (e.key == "seed") s.run_seed = parse_seed(doc, e);
      else fail(doc, e, "unknown key");
    } else {
      fail(doc, e.line, "unknown section [" + e.section + "]");
    }
  }
  return s;
}

}  // namespace resplat
