#include "resplat/synthetic.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "resplat/common.hpp"

namespace resplat {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

Vec3 hsv_to_rgb(double h, double s, double v) {
  h -= std::floor(h);
  const int i = int(h * 6.0) % 6;
  const double f = h * 6.0 - std::floor(h * 6.0);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - f * s);
  const double t = v * (1.0 - (1.0 - f) * s);
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// A capsule between p0 and p1 (a sphere when they coincide), carrying one
// outfit tone and a share of the gaussian budget.
struct BodyPart {
  Vec3 p0, p1;
  double radius = 0.1;
  Vec3 tone = Vec3::Constant(0.5);
  int count = 0;
};

void sample_part(const BodyPart& part, Rng& rng, std::vector<Gaussian3D>* out) {
  const Vec3 span = part.p1 - part.p0;
  const double len = span.norm();
  const Vec3 a = len > 1e-12 ? Vec3(span / len) : Vec3(0, 1, 0);
  Vec3 u = std::abs(a.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 0, 1);
  u = (u - a * a.dot(u)).normalized();
  const Vec3 w = a.cross(u);

  const double side_area = 2.0 * M_PI * part.radius * len;
  const double cap_area = 4.0 * M_PI * part.radius * part.radius;
  const double total_area = side_area + cap_area;
  const double splat_scale =
      1.6 * std::sqrt(total_area / (M_PI * double(part.count)));

  for (int i = 0; i < part.count; ++i) {
    Vec3 pos, normal;
    if (rng.uniform() * total_area < side_area) {
      const double t = rng.uniform();
      const double phi = rng.uniform() * 2.0 * M_PI;
      normal = std::cos(phi) * u + std::sin(phi) * w;
      pos = part.p0 + t * len * a + part.radius * normal;
    } else {
      Vec3 d(rng.normal(), rng.normal(), rng.normal());
      while (d.norm() < 1e-6) d = Vec3(rng.normal(), rng.normal(), rng.normal());
      d.normalize();
      const Vec3& cap_center = d.dot(a) >= 0.0 ? part.p1 : part.p0;
      pos = cap_center + part.radius * d;
      normal = d;
    }
    const double shade = normal.z() > 0.0 ? 1.0 : 0.55;
    Vec3 color = part.tone * shade;
    for (int k = 0; k < 3; ++k)
      color[k] = std::clamp(color[k] + 0.03 * rng.normal(), 0.0, 1.0);

    Gaussian3D g;
    g.position = pos;
    g.log_scale = Vec3::Constant(std::log(splat_scale));
    g.rotation = Vec4(1, 0, 0, 0);
    g.color = color;
    g.opacity_logit = logit(0.9);
    out->push_back(g);
  }
}

json camera_to_json(const CameraPose& c) {
  json j;
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r)
    for (int col = 0; col < 3; ++col) rot[size_t(3 * r + col)] = c.world_to_cam(r, col);
  j["world_to_cam"] = rot;
  j["translation"] = {c.translation[0], c.translation[1], c.translation[2]};
  j["focal"] = c.focal;
  j["principal"] = {c.principal[0], c.principal[1]};
  j["width"] = c.width;
  j["height"] = c.height;
  return j;
}

CameraPose camera_from_json(const json& j) {
  CameraPose c;
  const auto rot = j.at("world_to_cam").get<std::vector<double>>();
  if (rot.size() != 9) throw ConfigError("camera manifest: rotation needs 9 entries");
  for (int r = 0; r < 3; ++r)
    for (int col = 0; col < 3; ++col) c.world_to_cam(r, col) = rot[size_t(3 * r + col)];
  const auto tr = j.at("translation").get<std::vector<double>>();
  if (tr.size() != 3) throw ConfigError("camera manifest: translation needs 3 entries");
  c.translation = Vec3(tr[0], tr[1], tr[2]);
  c.focal = j.at("focal").get<double>();
  const auto pp = j.at("principal").get<std::vector<double>>();
  if (pp.size() != 2) throw ConfigError("camera manifest: principal needs 2 entries");
  c.principal = Vec2(pp[0], pp[1]);
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.validate();
  return c;
}

}  // namespace

void SyntheticScene::validate() const {
  if (generator.empty()) throw ConfigError("synthetic scene: empty generator id");
  truth.validate();
  frontal.validate();
}

RingRig mannequin_rig() {
  RingRig rig;
  rig.target = Vec3(0.0, 0.95, 0.0);
  return rig;
}

SyntheticScene make_mannequin(uint64_t seed) {
  Rng rng(derive_seed(seed, "mannequin"));

  // Always draw four tone candidates so the stream layout is seed-stable.
  std::vector<Vec3> tones;
  for (int i = 0; i < 4; ++i)
    tones.push_back(
        hsv_to_rgb(rng.uniform(), rng.uniform(0.45, 0.9), rng.uniform(0.5, 0.95)));
  const int n_tones = 2 + rng.uniform_int(0, 2);
  const Vec3 shirt = tones[0];
  const Vec3 pants = tones[1];
  const Vec3 skin = n_tones >= 3 ? tones[2] : shirt;
  const Vec3 sleeves = n_tones >= 4 ? tones[3] : shirt;

  const double hscale = 1.0 + 0.1 * (2.0 * rng.uniform() - 1.0);
  const double torso_r = 0.18 * (1.0 + 0.3 * (rng.uniform() - 0.5));
  const double head_r = 0.13 * (1.0 + 0.2 * (rng.uniform() - 0.5));
  const double arm_splay = 0.06 + 0.10 * rng.uniform();

  std::vector<BodyPart> parts;
  parts.push_back({Vec3(0, 0.68 * hscale, 0), Vec3(0, 1.25 * hscale, 0), torso_r,
                   shirt, 150});
  parts.push_back({Vec3(0, 1.48 * hscale, 0), Vec3(0, 1.48 * hscale, 0), head_r,
                   skin, 64});
  for (int side : {-1, 1}) {
    parts.push_back({Vec3(side * (torso_r + 0.045), 1.22 * hscale, 0),
                     Vec3(side * (torso_r + 0.045 + arm_splay), 0.75 * hscale, 0),
                     0.05, sleeves, 52});
    parts.push_back({Vec3(side * 0.09, 0.62 * hscale, 0),
                     Vec3(side * 0.11, 0.06, 0), 0.07, pants, 56});
  }

  SyntheticScene s;
  s.generator = "mannequin";
  s.seed = seed;
  for (const BodyPart& part : parts) sample_part(part, rng, &s.truth.gaussians);
  s.truth.set_bound_from_positions(0.1);
  s.frontal = ring_pose_at(mannequin_rig(), 0.0);
  s.validate();
  return s;
}

void save_synthetic_scene(const std::string& dir, const SyntheticScene& s) {
  s.validate();
  fs::create_directories(dir);
  save_scene(dir + "/scene.txt", s.truth);
  json j;
  j["format"] = "synthetic-scene";
  j["version"] = 1;
  j["generator"] = s.generator;
  j["seed"] = s.seed;
  j["frontal"] = camera_to_json(s.frontal);
  std::ofstream out(dir + "/manifest.json", std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + dir + "/manifest.json");
  out << j.dump(2) << "\n";
  if (!out) throw ConfigError("short write to " + dir + "/manifest.json");
}

SyntheticScene load_synthetic_scene(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw ConfigError("cannot open " + dir + "/manifest.json");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(dir + "/manifest.json: " + e.what());
  }
  try {
    if (j.at("format") != "synthetic-scene" || j.at("version") != 1)
      throw ConfigError(dir + ": unsupported scene manifest format");
    SyntheticScene s;
    s.generator = j.at("generator").get<std::string>();
    s.seed = j.at("seed").get<uint64_t>();
    s.frontal = camera_from_json(j.at("frontal"));
    s.truth = load_scene(dir + "/scene.txt");
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(dir + "/manifest.json: missing field: " + e.what());
  }
}

void save_corpus(const std::string& dir,
                 const std::vector<SyntheticScene>& scenes) {
  if (scenes.empty()) throw ConfigError("refusing to write an empty corpus");
  fs::create_directories(dir);
  char name[32];
  for (size_t i = 0; i < scenes.size(); ++i) {
    std::snprintf(name, sizeof(name), "scene_%04zu", i);
    save_synthetic_scene(dir + "/" + name, scenes[i]);
  }
}

std::vector<SyntheticScene> load_corpus(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("corpus directory missing: " + dir);
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("scene_", 0) == 0)
      names.push_back(entry.path().string());
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw ConfigError("corpus is empty: " + dir);
  std::vector<SyntheticScene> scenes;
  scenes.reserve(names.size());
  for (const std::string& n : names) scenes.push_back(load_synthetic_scene(n));
  return scenes;
}

}  // namespace resplat
