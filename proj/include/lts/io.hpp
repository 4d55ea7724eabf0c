#pragma once

#include "lts/sampling.hpp"

#include <iosfwd>
#include <stdexcept>
#include <string>

namespace lts {

/// Malformed input; `line()` is 1-based, or 0 when no line applies.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Population as JSON. Doubles are written in shortest round-trip form, so
/// read_population(write_population(p)) reproduces p bit for bit.
///
///   { "format": "lts-population", "version": 1, "n_frame": N,
///     "venue_sizes": [...], "y1": [...], "y2": [...],
///     "links1": {"matrix": ["0101...", ...]}  or
///               {"generator": {"mu": .., "alpha": [...], "beta": [...],
///                              "interacts": [0,1,..], "interaction": [...]}},
///     "links2": ..., "generator_name": "" }
std::string write_population(const Population& pop);
Population read_population(const std::string& json_text);
Population load_population(const std::string& path);
void save_population(const Population& pop, const std::string& path);

/// Line-oriented sample format:
///
///   lts-sample 1
///   frame <N>
///   venues <i_1> ... <i_n>        frame indices, ascending, 0-based
///   sizes <m_1> ... <m_n>
///   person <V|F|O> <venue> <bits> <y>
///
/// V = venue member (venue is the 0-based position among the sampled venues,
/// bits has n-1 characters), F = named frame person, O = outside the frame
/// (venue is -1, bits has n characters). An empty pattern is written "-".
/// Blank lines and lines starting with '#' are ignored.
void write_sample(std::ostream& out, const LtsSample& sample);
LtsSample read_sample(std::istream& in);
LtsSample load_sample(const std::string& path);
void save_sample(const LtsSample& sample, const std::string& path);

/// Shortest decimal that reads back to the same double ("nan" for NaN).
std::string format_double(double v);
/// Fixed 17 significant digits, locale independent; empty for NaN.
std::string format_csv_double(double v);
/// Inverse of format_csv_double: empty or "nan" gives NaN.
double parse_csv_double(const std::string& text);

}  // namespace lts
