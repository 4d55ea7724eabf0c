#include "config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace ltscli {

using nlohmann::json;

namespace {

std::string join(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

// Walks one JSON object, remembering which keys were consumed.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) {
      throw ConfigError(path_.empty() ? "(root)" : path_, "expected an object");
    }
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return join(path_, key); }

  void read(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) {
        throw ConfigError(path(key), "expected an integer");
      }
      const auto x = v->get<std::int64_t>();
      if (x < INT32_MIN || x > INT32_MAX) {
        throw ConfigError(path(key), "out of range");
      }
      out = static_cast<int>(x);
    }
  }

  void read(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
        throw ConfigError(path(key), "expected a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }

  void read(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) {
        throw ConfigError(path(key), "expected a number");
      }
      out = v->get<double>();
    }
  }

  void read(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) {
        throw ConfigError(path(key), "expected true or false");
      }
      out = v->get<bool>();
    }
  }

  void read(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) {
        throw ConfigError(path(key), "expected a string");
      }
      out = v->get<std::string>();
    }
  }

  void read(const std::string& key, std::array<double, 2>& out) {
    if (const json* v = find(key)) {
      read_pair(*v, path(key), out);
    }
  }

  static void read_pair(const json& v, const std::string& where, std::array<double, 2>& out) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw ConfigError(where, "expected two numbers");
    }
    out = {v[0].get<double>(), v[1].get<double>()};
  }

  // Anything not consumed is a key the schema does not know.
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.contains(it.key())) {
        throw ConfigError(path(it.key()), "unknown key");
      }
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class E>
E choose(const std::string& where, const std::string& text,
         std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, value] : options) {
    if (text == name) {
      return value;
    }
    names += names.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(where, "'" + text + "' is not one of " + names);
}

const char* optimizer_name(lts::OptimizerKind k) { return k == lts::OptimizerKind::Bfgs ? "bfgs" : "nelder-mead"; }
const char* scheme_name(lts::FitScheme s) { return s == lts::FitScheme::Profile ? "profile" : "alternating"; }
const char* regression_name(lts::RegressionMode m) {
  switch (m) {
    case lts::RegressionMode::Auto:
      return "auto";
    case lts::RegressionMode::ForceLinear:
      return "linear";
    case lts::RegressionMode::ForceLogistic:
      return "logistic";
  }
  return "?";
}

lts::PopulationSpec population_from(const json& obj) {
  Section s(obj, "population");
  std::string kind = "I";
  std::string response = "continuous";
  s.read("kind", kind);
  s.read("response", response);
  const auto k = choose<lts::PopulationKind>(s.path("kind"), kind,
                                             {{"I", lts::PopulationKind::PopulationI},
                                              {"II", lts::PopulationKind::PopulationII},
                                              {"file", lts::PopulationKind::ExplicitFile}});
  const auto r = choose<lts::ResponseKind>(s.path("response"), response,
                                           {{"continuous", lts::ResponseKind::Continuous},
                                            {"binary", lts::ResponseKind::Binary}});
  lts::PopulationSpec p = lts::PopulationSpec::standard(k, r);
  s.read("path", p.path);
  s.read("n_frame", p.n_frame);
  s.read("size_mean", p.size_mean);
  s.read("size_var", p.size_var);
  s.read("tau2", p.tau2);
  s.read("c", p.c);
  s.read("mu", p.mu);
  s.read("class_effect", p.class_effect);
  s.read("interaction_sd", p.interaction_sd);
  s.read("class1_prob", p.class1_prob);
  s.read("d", p.d);
  s.read("g", p.g);
  if (const json* v = s.find("fraction_targets")) {
    if (v->is_null()) {
      p.fraction_targets.reset();
    } else {
      std::array<double, 2> t{};
      Section::read_pair(*v, s.path("fraction_targets"), t);
      p.fraction_targets = t;
    }
  }
  s.read("calibration_n", p.calibration_n);
  s.finish();
  return p;
}

// "population.size_var: must ..." -> field "population.size_var"
ConfigError from_invariant(const std::string& message) {
  const auto colon = message.find(": ");
  if (colon != std::string::npos && message.find(' ') > colon) {
    return ConfigError(message.substr(0, colon), message.substr(colon + 2));
  }
  return ConfigError("", message);
}

}  // namespace

void apply_overrides(json& doc, const std::vector<std::string>& overrides) {
  if (!doc.is_object()) {
    throw ConfigError("(root)", "expected an object");
  }
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set", "expected key=value, got '" + item + "'");
    }
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) {
      value = text;
    }
    json* node = &doc;
    std::string walked;
    std::size_t start = 0;
    for (;;) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) {
        throw ConfigError(key, "empty path component");
      }
      walked = join(walked, part);
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      json& next = (*node)[part];
      if (next.is_null()) {
        next = json::object();
      } else if (!next.is_object()) {
        throw ConfigError(walked, "is not an object");
      }
      node = &next;
      start = dot + 1;
    }
  }
}

lts::McConfig config_from_json(const json& doc) {
  Section root(doc, "");
  lts::McConfig c;
  if (const json* p = root.find("population")) {
    c.population = population_from(*p);
  }
  root.read("n", c.n);
  root.read("r", c.r);
  root.read("master_seed", c.master_seed);
  root.read("threads", c.threads);
  if (const json* m = root.find("methods")) {
    if (!m->is_array()) {
      throw ConfigError("methods", "expected a list such as [\"U\", \"C\"]");
    }
    c.methods.clear();
    for (std::size_t i = 0; i < m->size(); ++i) {
      const std::string where = "methods[" + std::to_string(i) + "]";
      if (!(*m)[i].is_string()) {
        throw ConfigError(where, "expected \"U\" or \"C\"");
      }
      const auto method = choose<lts::FitMethod>(where, (*m)[i].get<std::string>(),
                                                 {{"U", lts::FitMethod::Unconditional},
                                                  {"C", lts::FitMethod::Conditional}});
      for (auto seen : c.methods) {
        if (seen == method) {
          throw ConfigError(where, "listed twice");
        }
      }
      c.methods.push_back(method);
    }
  }
  if (const json* b = root.find("bootstrap")) {
    Section s(*b, "bootstrap");
    s.read("enabled", c.bootstrap);
    s.read("B", c.boot.replicates);
    s.read("alpha", c.boot.alpha_level);
    s.read("huber_tuning", c.boot.huber_tuning);
    std::string reg = regression_name(c.boot.regression_mode);
    s.read("regression", reg);
    c.boot.regression_mode = choose<lts::RegressionMode>(s.path("regression"), reg,
                                                         {{"auto", lts::RegressionMode::Auto},
                                                          {"linear", lts::RegressionMode::ForceLinear},
                                                          {"logistic", lts::RegressionMode::ForceLogistic}});
    s.finish();
  }
  if (const json* f = root.find("fit")) {
    Section s(*f, "fit");
    s.read("quadrature_nodes", c.fit.quadrature_nodes);
    std::string opt = optimizer_name(c.fit.optimizer);
    s.read("optimizer", opt);
    c.fit.optimizer = choose<lts::OptimizerKind>(s.path("optimizer"), opt,
                                                 {{"bfgs", lts::OptimizerKind::Bfgs},
                                                  {"nelder-mead", lts::OptimizerKind::NelderMead}});
    std::string scheme = scheme_name(c.fit.scheme);
    s.read("scheme", scheme);
    c.fit.scheme = choose<lts::FitScheme>(s.path("scheme"), scheme,
                                          {{"profile", lts::FitScheme::Profile},
                                           {"alternating", lts::FitScheme::Alternating}});
    s.read("grad_tol", c.fit.grad_tol);
    s.read("rel_tol", c.fit.rel_tol);
    s.read("max_outer", c.fit.max_outer);
    s.read("max_iterations", c.fit.max_iterations);
    s.read("max_evaluations", c.fit.max_evaluations);
    s.read("tau_cap", c.fit.tau_cap);
    s.read("denominator_floor", c.fit.denominator_floor);
    s.read("sigma_start", c.fit.sigma_start);
    s.finish();
  }
  root.finish();
  if (!(c.fit.grad_tol > 0.0) || !(c.fit.rel_tol > 0.0)) {
    throw ConfigError("fit", "tolerances must be positive");
  }
  if (c.fit.max_outer < 1 || c.fit.max_iterations < 1 || c.fit.max_evaluations < 1) {
    throw ConfigError("fit", "iteration limits must be positive");
  }
  if (!(c.fit.tau_cap > 0.0) || !(c.fit.denominator_floor > 0.0) || !(c.fit.sigma_start >= 0.0)) {
    throw ConfigError("fit", "tau_cap and denominator_floor must be positive, sigma_start non-negative");
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw from_invariant(e.what());
  }
  return c;
}

json config_to_json(const lts::McConfig& c) {
  const auto& p = c.population;
  json pop = {
      {"kind", lts::to_string(p.kind)},
      {"response", lts::to_string(p.response)},
      {"path", p.path},
      {"n_frame", p.n_frame},
      {"size_mean", p.size_mean},
      {"size_var", p.size_var},
      {"tau2", p.tau2},
      {"c", {p.c[0], p.c[1]}},
      {"mu", {p.mu[0], p.mu[1]}},
      {"class_effect", p.class_effect},
      {"interaction_sd", p.interaction_sd},
      {"class1_prob", p.class1_prob},
      {"d", {p.d[0], p.d[1]}},
      {"g", {p.g[0], p.g[1]}},
      {"fraction_targets", p.fraction_targets ? json{(*p.fraction_targets)[0], (*p.fraction_targets)[1]} : json()},
      {"calibration_n", p.calibration_n},
  };
  json methods = json::array();
  for (auto m : c.methods) {
    methods.push_back(lts::method_tag(m));
  }
  return {
      {"population", pop},
      {"n", c.n},
      {"r", c.r},
      {"master_seed", c.master_seed},
      {"threads", c.threads},
      {"methods", methods},
      {"bootstrap",
       {{"enabled", c.bootstrap},
        {"B", c.boot.replicates},
        {"alpha", c.boot.alpha_level},
        {"huber_tuning", c.boot.huber_tuning},
        {"regression", regression_name(c.boot.regression_mode)}}},
      {"fit",
       {{"quadrature_nodes", c.fit.quadrature_nodes},
        {"optimizer", optimizer_name(c.fit.optimizer)},
        {"scheme", scheme_name(c.fit.scheme)},
        {"grad_tol", c.fit.grad_tol},
        {"rel_tol", c.fit.rel_tol},
        {"max_outer", c.fit.max_outer},
        {"max_iterations", c.fit.max_iterations},
        {"max_evaluations", c.fit.max_evaluations},
        {"tau_cap", c.fit.tau_cap},
        {"denominator_floor", c.fit.denominator_floor},
        {"sigma_start", c.fit.sigma_start}}},
  };
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) {
    throw IoError("error reading " + path);
  }
  return buf.str();
}

lts::McConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path, std::string("invalid JSON: ") + e.what());
  }
  apply_overrides(doc, overrides);
  return config_from_json(doc);
}

std::string canonical_config(const lts::McConfig& config) {
  json doc = config_to_json(config);
  doc.erase("threads");
  return doc.dump();
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace ltscli
