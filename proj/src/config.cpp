#include "stbench/synth.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace stb {
namespace {

using nlohmann::json;

template <typename T>
T field(const json& j, const std::string& key, const std::string& path, std::optional<T> fallback = std::nullopt) {
  if (!j.is_object()) throw StbError(path + ": expected a table");
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw StbError(path + "." + key + ": missing required field");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw StbError(path + "." + key + ": wrong type");
  }
}

void known_keys(const json& j, std::initializer_list<const char*> keys, const std::string& path) {
  if (!j.is_object()) return;
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const char* key : keys) ok = ok || k == key;
    if (!ok) throw StbError(path + "." + k + ": unknown key");
  }
}

template <typename Fn>
auto with_path(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const StbError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    throw StbError(path + ": " + msg);
  }
}

EventSpec event_at(const json& j, const std::string& path) {
  return with_path(path, [&] { return event_spec_from_json(j); });
}

std::vector<EventSpec> events_at(const json& j, const std::string& key, const std::string& path) {
  std::vector<EventSpec> out;
  if (!j.contains(key)) return out;
  if (!j[key].is_array()) throw StbError(path + "." + key + ": expected an array");
  for (std::size_t i = 0; i < j[key].size(); ++i)
    out.push_back(event_at(j[key][i], path + "." + key + "[" + std::to_string(i) + "]"));
  return out;
}

BaseSpec base_at(const json& j, const std::string& path) {
  known_keys(j, {"kind", "shift", "amp", "nOsc", "const", "latGrad", "clim_path", "clim_var"}, path);
  BaseSpec b;
  b.kind = with_path(path + ".kind", [&] { return parse_base_kind(field<std::string>(j, "kind", path)); });
  b.shift = field<double>(j, "shift", path, 0.0);
  b.amp = field<double>(j, "amp", path, 0.0);
  b.n_osc = field<int>(j, "nOsc", path, 1);
  b.constant = field<double>(j, "const", path, 0.0);
  b.lat_grad = field<bool>(j, "latGrad", path, false);
  b.clim_path = field<std::string>(j, "clim_path", path, std::string());
  b.clim_var = field<int>(j, "clim_var", path, 0);
  with_path(path, [&] { validate(b); return 0; });
  return b;
}

NoiseSpec noise_at(const json& j, const std::string& path) {
  known_keys(j, {"kind", "meu", "sigma", "lambda", "rho", "spatial_len"}, path);
  NoiseSpec n;
  n.kind = with_path(path + ".kind", [&] { return parse_noise_kind(field<std::string>(j, "kind", path)); });
  n.meu = field<double>(j, "meu", path, 0.0);
  n.sigma = field<double>(j, "sigma", path);
  n.lambda = field<double>(j, "lambda", path, 1.0);
  n.rho = field<double>(j, "rho", path, 0.9);
  n.spatial_len = field<double>(j, "spatial_len", path, 2.0);
  if (!(n.sigma > 0)) throw StbError(path + ".sigma: must be > 0");
  if (!(n.rho >= 0 && n.rho < 1)) throw StbError(path + ".rho: must be in [0,1)");
  if (!(n.spatial_len >= 0)) throw StbError(path + ".spatial_len: must be >= 0");
  if (!(n.lambda > 0)) throw StbError(path + ".lambda: must be > 0");
  return n;
}

json base_json(const BaseSpec& b) {
  json j{{"kind", to_string(b.kind)}, {"shift", b.shift}, {"amp", b.amp}, {"nOsc", b.n_osc},
         {"const", b.constant}, {"latGrad", b.lat_grad}};
  if (b.kind == BaseKind::FromClimatology) {
    j["clim_path"] = b.clim_path;
    j["clim_var"] = b.clim_var;
  }
  return j;
}

json noise_json(const NoiseSpec& n) {
  return {{"kind", to_string(n.kind)}, {"meu", n.meu}, {"sigma", n.sigma}, {"lambda", n.lambda},
          {"rho", n.rho}, {"spatial_len", n.spatial_len}};
}

json events_json(const std::vector<EventSpec>& specs) {
  json a = json::array();
  for (const auto& s : specs) a.push_back(to_json(s));
  return a;
}

}  // namespace

std::vector<std::string> GenConfig::names() const {
  std::vector<std::string> out;
  for (const auto& v : variables) out.push_back(v.name);
  return out;
}

void validate(const GenConfig& c) {
  if (c.lat < 1 || c.lon < 1) throw StbError("grid: lat and lon must be >= 1");
  if (c.weeks_per_year < 1) throw StbError("grid.weeks_per_year: must be >= 1");
  if (c.years < 2) throw StbError("grid.years: must be >= 2");
  if (c.years_train < 2) throw StbError("split.train: at least 2 training years are needed for a climatology");
  if (c.years_val < 0 || c.years_test < 0) throw StbError("split: year counts must be >= 0");
  if (c.years_train + c.years_val + c.years_test != c.years)
    throw StbError("split: train+val+test (" + std::to_string(c.years_train + c.years_val + c.years_test) +
                   ") must equal grid.years (" + std::to_string(c.years) + ")");
  if (c.variables.empty()) throw StbError("variables: at least one variable required");
  if (c.coupled_count < 0 || c.coupled_count > static_cast<int>(c.variables.size()))
    throw StbError("coupling.coupled_count: must be in [0, V]");
  if (c.lead_max < 0) throw StbError("coupling.lead_max: must be >= 0");
  if (c.lag_max < 0) throw StbError("coupling.lag_max: must be >= 0");
  bool any_independent = false;
  for (std::size_t i = 0; i < c.variables.size(); ++i) {
    const auto& v = c.variables[i];
    const std::string path = "variables[" + std::to_string(i) + "]";
    if (v.base.has_value() == v.dependency.has_value())
      throw StbError(path + ": exactly one of 'base' or 'dependency' is required");
    if (v.base) {
      any_independent = true;
      with_path(path + ".base", [&] { validate(*v.base); return 0; });
    }
    with_path(path + ".noise", [&] { validate(v.noise); return 0; });
    for (std::size_t k = 0; k < v.events.size(); ++k)
      with_path(path + ".events[" + std::to_string(k) + "]", [&] { validate(v.events[k]); return 0; });
    for (auto [name, val] : {std::pair{"kb", v.kb}, {"kn", v.kn}, {"ks", v.ks}})
      if (!std::isfinite(val) || val < 0) throw StbError(path + "." + name + ": must be finite and >= 0");
    if (v.delta != 0 && v.delta != 1 && v.delta != -1) throw StbError(path + ".delta: must be -1, +1 or omitted");
  }
  for (const auto& v : c.variables)
    if (v.dependency && !any_independent)
      throw StbError("variables: dependent variables need at least one independent base");
  for (std::size_t k = 0; k < c.extremes.size(); ++k)
    with_path("extremes[" + std::to_string(k) + "]", [&] { validate(c.extremes[k]); return 0; });
  for (std::size_t k = 0; k < c.invalid_boxes.size(); ++k) {
    const auto& b = c.invalid_boxes[k];
    if (b[0] < 0 || b[1] > c.lat || b[0] > b[1] || b[2] < 0 || b[3] > c.lon || b[2] > b[3])
      throw StbError("invalid_boxes[" + std::to_string(k) + "]: box outside the grid");
  }
}

GenConfig config_from_json(const json& j) {
  if (!j.is_object()) throw StbError("config: expected a table at top level");
  known_keys(j, {"seed", "grid", "split", "coupling", "invalid_boxes", "extremes", "variables"}, "config");
  GenConfig c;
  c.seed = static_cast<std::uint64_t>(field<std::int64_t>(j, "seed", "config", 0));

  const json grid = j.value("grid", json::object());
  known_keys(grid, {"lat", "lon", "years", "weeks_per_year"}, "grid");
  c.lat = field<Index>(grid, "lat", "grid");
  c.lon = field<Index>(grid, "lon", "grid");
  c.years = field<int>(grid, "years", "grid");
  c.weeks_per_year = field<int>(grid, "weeks_per_year", "grid", kWeeksPerYear);

  const json split = j.value("split", json::object());
  known_keys(split, {"train", "val", "test"}, "split");
  c.years_train = field<int>(split, "train", "split");
  c.years_val = field<int>(split, "val", "split", 0);
  c.years_test = field<int>(split, "test", "split", 0);

  const json coupling = j.value("coupling", json::object());
  known_keys(coupling, {"coupled_count", "lead_max", "lag_max"}, "coupling");
  c.coupled_count = field<int>(coupling, "coupled_count", "coupling", 0);
  c.lead_max = field<int>(coupling, "lead_max", "coupling", 0);
  c.lag_max = field<int>(coupling, "lag_max", "coupling", 0);

  if (j.contains("invalid_boxes")) {
    try {
      c.invalid_boxes = j["invalid_boxes"].get<std::vector<std::array<int, 4>>>();
    } catch (const json::exception&) {
      throw StbError("invalid_boxes: expected a list of [lat0, lat1, lon0, lon1]");
    }
  }

  c.extremes = events_at(j, "extremes", "config");
  if (!j.contains("variables") || !j["variables"].is_array())
    throw StbError("variables: missing required array");
  for (std::size_t i = 0; i < j["variables"].size(); ++i) {
    const json& vj = j["variables"][i];
    const std::string path = "variables[" + std::to_string(i) + "]";
    known_keys(vj, {"name", "units", "base", "dependency", "noise", "events", "kb", "kn", "ks", "delta"}, path);
    VariableConfig v;
    v.name = field<std::string>(vj, "name", path);
    v.units = field<std::string>(vj, "units", path, std::string());
    if (vj.contains("base")) v.base = base_at(vj["base"], path + ".base");
    if (vj.contains("dependency")) {
      const json& dj = vj["dependency"];
      const std::string dp = path + ".dependency";
      known_keys(dj, {"kind", "weights", "disturbed"}, dp);
      DependencySpec d;
      d.kind = with_path(dp + ".kind", [&] { return parse_coupling_kind(field<std::string>(dj, "kind", dp)); });
      d.weights.dist = with_path(dp + ".weights", [&] {
        return parse_weight_dist(field<std::string>(dj, "weights", dp, std::string("NormWeight")));
      });
      d.weights.disturbed = field<bool>(dj, "disturbed", dp, false);
      v.dependency = d;
    }
    if (!vj.contains("noise")) throw StbError(path + ".noise: missing required field");
    v.noise = noise_at(vj["noise"], path + ".noise");
    v.events = events_at(vj, "events", path);
    v.kb = field<double>(vj, "kb", path, 0.0);
    v.kn = field<double>(vj, "kn", path, 0.0);
    v.ks = field<double>(vj, "ks", path, 0.0);
    v.delta = field<int>(vj, "delta", path, 0);
    c.variables.push_back(std::move(v));
  }
  validate(c);
  return c;
}

json to_json(const GenConfig& c) {
  json vars = json::array();
  for (const auto& v : c.variables) {
    json vj{{"name", v.name}, {"units", v.units}, {"noise", noise_json(v.noise)}, {"events", events_json(v.events)},
            {"kb", v.kb}, {"kn", v.kn}, {"ks", v.ks}};
    if (v.delta != 0) vj["delta"] = v.delta;
    if (v.base) vj["base"] = base_json(*v.base);
    if (v.dependency)
      vj["dependency"] = {{"kind", to_string(v.dependency->kind)},
                          {"weights", to_string(v.dependency->weights.dist)},
                          {"disturbed", v.dependency->weights.disturbed}};
    vars.push_back(vj);
  }
  return {{"seed", static_cast<std::int64_t>(c.seed)},
          {"grid", {{"lat", c.lat}, {"lon", c.lon}, {"years", c.years}, {"weeks_per_year", c.weeks_per_year}}},
          {"split", {{"train", c.years_train}, {"val", c.years_val}, {"test", c.years_test}}},
          {"coupling", {{"coupled_count", c.coupled_count}, {"lead_max", c.lead_max}, {"lag_max", c.lag_max}}},
          {"invalid_boxes", c.invalid_boxes},
          {"extremes", events_json(c.extremes)},
          {"variables", vars}};
}

json load_config_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StbError("cannot open config file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  if (path.extension() == ".json") {
    try {
      return json::parse(buffer.str());
    } catch (const json::exception& e) {
      throw StbError(path.string() + ": " + e.what());
    }
  }
  try {
    const toml::table table = toml::parse(buffer.str(), path.string());
    std::stringstream as_json;
    as_json << toml::json_formatter{table};
    return json::parse(as_json.str());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << path.string() << ":" << e.source().begin.line << ": " << e.description();
    throw StbError(msg.str());
  }
}

GenConfig load_gen_config(const std::filesystem::path& path) { return config_from_json(load_config_document(path)); }

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  std::string hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, digest, &len);
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i)
      out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return out.str();
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_hex(std::span<const std::byte> bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StbError("cannot open: " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::string config_hash(const GenConfig& config) {
  const std::string text = to_json(config).dump();
  return sha256_hex(std::as_bytes(std::span<const char>(text.data(), text.size())));
}

}  // namespace stb
