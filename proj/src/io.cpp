#include "lts/io.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace lts {

using nlohmann::json;

namespace {

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    a.push_back(v(i));
  }
  return a;
}

Eigen::VectorXd json_vector(const json& a, const char* what) {
  if (!a.is_array()) {
    throw ParseError(std::string("population: ") + what + " must be an array");
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) {
      throw ParseError(std::string("population: ") + what + " must hold numbers");
    }
    v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  }
  return v;
}

json links_json(const LinkSource& src) {
  if (const auto* e = std::get_if<ExplicitLinks>(&src)) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < e->x.rows(); ++i) {
      std::string r(static_cast<std::size_t>(e->x.cols()), '0');
      for (Eigen::Index j = 0; j < e->x.cols(); ++j) {
        r[static_cast<std::size_t>(j)] = e->x(i, j) != 0 ? '1' : '0';
      }
      rows.push_back(r);
    }
    return {{"matrix", rows}};
  }
  const auto& g = std::get<LinkGenerator>(src);
  json gen = {{"mu", g.mu}, {"alpha", vector_json(g.alpha)}, {"beta", vector_json(g.beta)}};
  if (!g.interacts.empty()) {
    gen["interacts"] = g.interacts;
    gen["interaction"] = vector_json(g.interaction);
  }
  return {{"generator", gen}};
}

LinkSource json_links(const json& j, int n_frame, const char* what) {
  if (j.contains("matrix")) {
    const auto& rows = j.at("matrix");
    ExplicitLinks e;
    const auto cols = rows.empty() ? std::size_t{0} : rows[0].get<std::string>().size();
    if (static_cast<int>(rows.size()) != n_frame) {
      throw ParseError(std::string("population: ") + what + " matrix must have n_frame rows");
    }
    e.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = rows[i].get<std::string>();
      if (r.size() != cols) {
        throw ParseError(std::string("population: ragged ") + what + " matrix");
      }
      for (std::size_t c = 0; c < cols; ++c) {
        if (r[c] != '0' && r[c] != '1') {
          throw ParseError(std::string("population: ") + what + " matrix must contain only 0/1");
        }
        e.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = r[c] == '1' ? 1 : 0;
      }
    }
    return e;
  }
  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    LinkGenerator out;
    out.mu = g.value("mu", 0.0);
    out.alpha = json_vector(g.at("alpha"), "alpha");
    out.beta = json_vector(g.at("beta"), "beta");
    if (g.contains("interacts")) {
      out.interacts = g.at("interacts").get<std::vector<std::uint8_t>>();
      out.interaction = json_vector(g.at("interaction"), "interaction");
    }
    return out;
  }
  throw ParseError(std::string("population: ") + what + " needs 'matrix' or 'generator'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::ios_base::failure("cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string write_population(const Population& pop) {
  json j = {{"format", "lts-population"},
            {"version", 1},
            {"n_frame", pop.n_frame},
            {"venue_sizes", pop.venue_sizes},
            {"y1", vector_json(pop.y1)},
            {"y2", vector_json(pop.y2)},
            {"links1", links_json(pop.links1)},
            {"links2", links_json(pop.links2)},
            {"generator_name", pop.generator_name}};
  return j.dump(1);
}

Population read_population(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("population: ") + e.what());
  }
  try {
    if (j.value("format", std::string()) != "lts-population") {
      throw ParseError("population: missing format tag 'lts-population'");
    }
    Population p;
    p.n_frame = j.at("n_frame").get<int>();
    p.venue_sizes = j.at("venue_sizes").get<std::vector<int>>();
    p.y1 = json_vector(j.at("y1"), "y1");
    p.y2 = json_vector(j.at("y2"), "y2");
    p.links1 = json_links(j.at("links1"), p.n_frame, "links1");
    p.links2 = json_links(j.at("links2"), p.n_frame, "links2");
    p.generator_name = j.value("generator_name", std::string());
    try {
      p.validate();
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what());
    }
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("population: ") + e.what());
  }
}

Population load_population(const std::string& path) { return read_population(read_file(path)); }

void save_population(const Population& pop, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  out << write_population(pop) << '\n';
  if (!out) {
    throw std::ios_base::failure("cannot write " + path);
  }
}

std::string format_double(double v) {
  if (std::isnan(v)) {
    return "nan";
  }
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_csv_double(double v) {
  if (std::isnan(v)) {
    return "";
  }
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

double parse_csv_double(const std::string& text) {
  if (text.empty() || text == "nan") {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw std::invalid_argument("not a number: '" + text + "'");
  }
  return v;
}

void write_sample(std::ostream& out, const LtsSample& sample) {
  out << "lts-sample 1\n";
  out << "frame " << sample.n_frame << '\n';
  out << "venues";
  for (int v : sample.selected_venues) {
    out << ' ' << v;
  }
  out << "\nsizes";
  for (int m : sample.venue_sizes) {
    out << ' ' << m;
  }
  out << '\n';
  for (const auto& p : sample.persons) {
    const char code = p.stratum == Stratum::InVenue ? 'V' : (p.stratum == Stratum::BeyondFrameSample ? 'F' : 'O');
    const std::string bits = p.pattern.size() == 0 ? "-" : p.pattern.to_string();
    out << "person " << code << ' ' << p.venue << ' ' << bits << ' ' << format_double(p.y) << '\n';
  }
}

namespace {

template <class T>
T parse_number(const std::string& tok, int line) {
  T v{};
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) {
    throw ParseError("bad number '" + tok + "'", line);
  }
  return v;
}

}  // namespace

LtsSample read_sample(std::istream& in) {
  LtsSample s;
  std::string text;
  int line = 0;
  bool header = false;
  bool have_frame = false;
  bool have_venues = false;
  bool have_sizes = false;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') {
      text.pop_back();
    }
    std::istringstream ls(text);
    std::string key;
    if (!(ls >> key) || key[0] == '#') {
      continue;
    }
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) {
      tok.push_back(t);
    }
    if (!header) {
      if (key != "lts-sample" || tok.size() != 1 || tok[0] != "1") {
        throw ParseError("expected header 'lts-sample 1'", line);
      }
      header = true;
    } else if (key == "frame") {
      if (tok.size() != 1) {
        throw ParseError("frame takes one value", line);
      }
      s.n_frame = parse_number<int>(tok[0], line);
      have_frame = true;
    } else if (key == "venues") {
      for (const auto& t : tok) {
        s.selected_venues.push_back(parse_number<int>(t, line));
      }
      have_venues = true;
    } else if (key == "sizes") {
      for (const auto& t : tok) {
        s.venue_sizes.push_back(parse_number<int>(t, line));
      }
      have_sizes = true;
    } else if (key == "person") {
      if (!have_frame || !have_venues || !have_sizes) {
        throw ParseError("person record before frame/venues/sizes", line);
      }
      if (tok.size() != 4) {
        throw ParseError("person needs stratum, venue, bits and y", line);
      }
      PersonRecord p;
      if (tok[0] == "V") {
        p.stratum = Stratum::InVenue;
      } else if (tok[0] == "F") {
        p.stratum = Stratum::BeyondFrameSample;
      } else if (tok[0] == "O") {
        p.stratum = Stratum::OutsideFrame;
      } else {
        throw ParseError("unknown stratum '" + tok[0] + "'", line);
      }
      p.venue = parse_number<int>(tok[1], line);
      try {
        p.pattern = tok[2] == "-" ? LinkPattern() : LinkPattern::parse(tok[2]);
      } catch (const std::invalid_argument& e) {
        throw ParseError(e.what(), line);
      }
      p.y = tok[3] == "nan" ? std::numeric_limits<double>::quiet_NaN() : parse_number<double>(tok[3], line);
      const std::size_t n = s.selected_venues.size();
      const std::size_t want = p.stratum == Stratum::InVenue ? n - 1 : n;
      if (p.pattern.size() != want) {
        throw ParseError("pattern has " + std::to_string(p.pattern.size()) + " links, expected " +
                             std::to_string(want),
                         line);
      }
      if (p.stratum == Stratum::InVenue ? (p.venue < 0 || p.venue >= static_cast<int>(n)) : p.venue != -1) {
        throw ParseError("venue " + tok[1] + " does not fit the stratum", line);
      }
      if (!std::isfinite(p.y)) {
        throw ParseError("y must be finite", line);
      }
      s.persons.push_back(std::move(p));
    } else {
      throw ParseError("unknown record '" + key + "'", line);
    }
  }
  if (!header) {
    throw ParseError("empty sample file");
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
  return s;
}

LtsSample load_sample(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::ios_base::failure("cannot open " + path);
  }
  return read_sample(in);
}

void save_sample(const LtsSample& sample, const std::string& path) {
  std::ofstream out(path);
  write_sample(out, sample);
  if (!out) {
    throw std::ios_base::failure("cannot write " + path);
  }
}

}  // namespace lts
