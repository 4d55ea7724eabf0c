#include "commands.hpp"

#include "config.hpp"
#include "lts/io.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#ifndef LTS_VERSION
#define LTS_VERSION "0.0.0"
#endif

namespace ltscli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

template <class Writer>
void write_file(const fs::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out.imbue(std::locale::classic());
  writer(out);
  out.flush();
  if (!out) {
    throw IoError("error writing " + path.string());
  }
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
}

lts::McConfig config_or_default(const std::string& path, const std::vector<std::string>& overrides) {
  if (!path.empty()) {
    return load_config(path, overrides);
  }
  json doc = json::object();
  apply_overrides(doc, overrides);
  return config_from_json(doc);
}

// Four significant digits for the human table.
std::string human(double v) {
  if (lts::is_missing(v)) {
    return "NA";
  }
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s << std::setprecision(4) << v;
  return s.str();
}

std::string status_line(lts::FitStatus status, const std::string& error) {
  if (status == lts::FitStatus::Ok) {
    return "ok";
  }
  return std::string(lts::to_string(status)) + (error.empty() ? "" : " (" + error + ")");
}

}  // namespace

std::string sample_file_name(int replicate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05d.txt", replicate);
  return buf;
}

int run_simulate(const SimulateOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    lts::McConfig config = load_config(opts.config_path, opts.overrides);
    if (opts.threads) {
      if (*opts.threads < 1) {
        throw ConfigError("--threads", "must be at least 1");
      }
      config.threads = *opts.threads;
    }
    const fs::path dir(opts.out_dir);
    make_dir(dir);
    const std::string started = utc_now();

    lts::McHooks hooks;
    hooks.keep_samples = opts.persist_samples;
    if (opts.progress) {
      hooks.progress = [&err](int done, int total) {
        if (done == total || done % 10 == 0) {
          err << "replicate " << done << "/" << total << '\n';
        }
      };
    }
    lts::McRun run;
    try {
      run = lts::run_monte_carlo(config, hooks);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("population", e.what());
    }

    const fs::path records = dir / "records.csv";
    const fs::path report_csv = dir / "report.csv";
    const fs::path report_txt = dir / "report.txt";
    const fs::path manifest = dir / "manifest.json";
    write_file(records, [&](std::ostream& o) { lts::write_records_csv(o, run.records); });
    write_file(report_csv, [&](std::ostream& o) { lts::write_report_csv(o, run.report); });
    write_file(report_txt, [&](std::ostream& o) { lts::write_report_table(o, run.report); });
    json outputs = {{"records", records.string()},
                    {"report_csv", report_csv.string()},
                    {"report_table", report_txt.string()}};
    if (opts.persist_samples) {
      const fs::path sdir = dir / "samples";
      make_dir(sdir);
      for (std::size_t i = 0; i < run.samples.size(); ++i) {
        lts::save_sample(run.samples[i], (sdir / sample_file_name(static_cast<int>(i))).string());
      }
      outputs["samples"] = sdir.string();
    }
    const std::string canonical = canonical_config(config);
    const json m = {
        {"tool", "ltsest"},
        {"version", LTS_VERSION},
        {"config_path", opts.config_path},
        {"config_hash", "fnv1a64:" + fnv1a_hex(canonical)},
        {"config", json::parse(canonical)},
        {"overrides", opts.overrides},
        {"master_seed", config.master_seed},
        {"threads", config.threads},
        {"started", started},
        {"finished", utc_now()},
        {"outputs", outputs},
    };
    write_file(manifest, [&](std::ostream& o) { o << m.dump(2) << '\n'; });
    lts::write_report_table(out, run.report);
    out << "\nwrote " << records.string() << ", " << report_csv.string() << ", " << report_txt.string() << ", "
        << manifest.string() << '\n';
    return kOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kInputError;
  } catch (const lts::ParseError& e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    // save_sample and load_population report unreadable paths as runtime errors
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
}

int run_estimate(const EstimateOptions& opts, std::ostream& out, std::ostream& err) {
  lts::LtsSample sample;
  lts::McConfig config;
  lts::FitMethod method{};
  try {
    if (opts.method == "unconditional" || opts.method == "U") {
      method = lts::FitMethod::Unconditional;
    } else if (opts.method == "conditional" || opts.method == "C") {
      method = lts::FitMethod::Conditional;
    } else {
      throw ConfigError("--method", "expected unconditional or conditional");
    }
    config = config_or_default(opts.config_path, opts.overrides);
    if (opts.bootstrap) {
      if (*opts.bootstrap < 0) {
        throw ConfigError("--bootstrap", "must be non-negative");
      }
      config.bootstrap = *opts.bootstrap > 0;
      if (config.bootstrap) {
        config.boot.replicates = *opts.bootstrap;
        try {
          config.boot.validate();
        } catch (const std::invalid_argument& e) {
          throw ConfigError("--bootstrap", e.what());
        }
      }
    }
    std::ifstream in(opts.sample_path);
    if (!in) {
      throw IoError("cannot read " + opts.sample_path);
    }
    sample = lts::read_sample(in);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kInputError;
  } catch (const lts::ParseError& e) {
    err << opts.sample_path << ": " << e.what() << '\n';
    return kInputError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::invalid_argument& e) {
    err << opts.sample_path << ": " << e.what() << '\n';
    return kInputError;
  }

  const lts::QuadratureRule rule = lts::make_rule(config.fit.quadrature_nodes);
  const lts::ObservedCounts counts = lts::observed_counts(sample);
  const lts::PortionFits fits = lts::fit_portions(counts, method, rule, config.fit);
  lts::EstimateSet e = lts::compute_estimates(sample, fits, method, rule);
  if (config.bootstrap) {
    e = lts::bootstrap_estimates(sample, fits, e, rule, config.boot, config.fit, opts.seed);
  }
  e.method = method;

  out << "method " << lts::method_tag(method) << " (" << lts::to_string(method) << ")\n";
  out << "venues " << sample.n() << " of " << sample.n_frame << ", m " << sample.m_total() << ", r1 "
      << sample.r1() << ", r2 " << sample.r2() << '\n';
  out << "portion 1 fit: " << status_line(e.fit1_status, e.fit1_error) << '\n';
  out << "portion 2 fit: " << status_line(e.fit2_status, e.fit2_error) << '\n';
  if (config.bootstrap) {
    out << "bootstrap: B " << config.boot.replicates << ", seed " << opts.seed << ", failed replicates "
        << e.boot_failures << (e.variance_unreliable ? " (variance unreliable)" : "") << '\n';
  }
  out << '\n'
      << std::left << std::setw(12) << "estimator" << std::right << std::setw(12) << "value" << std::setw(12) << "sd"
      << std::setw(12) << "lower" << std::setw(12) << "upper" << "  interval\n";
  for (std::size_t t = 0; t < lts::kEstimators.size(); ++t) {
    const auto id = lts::kEstimators[t];
    const auto& est = e.values[t];
    const std::string name = std::string(lts::to_string(id.family)) + " " + lts::to_string(id.target);
    out << std::left << std::setw(12) << name << std::right << std::setw(12) << human(est.value) << std::setw(12)
        << human(est.sd) << std::setw(12) << human(est.ci ? est.ci->lower : lts::kMissing) << std::setw(12)
        << human(est.ci ? est.ci->upper : lts::kMissing) << "  "
        << (est.ci ? std::string(lts::to_string(est.ci->kind)) + (est.ci->degenerate ? " degenerate" : "") : "")
        << '\n';
  }

  std::array<double, 9> truth;
  truth.fill(lts::kMissing);
  const auto records = lts::make_records(opts.replicate, e, truth, sample.m_total() + sample.r1(), sample.r2(),
                                         config.bootstrap ? opts.seed : 0);
  if (!opts.csv_path.empty()) {
    try {
      if (opts.csv_path == "-") {
        out << '\n';
        lts::write_records_csv(out, records);
      } else {
        write_file(opts.csv_path, [&](std::ostream& o) { lts::write_records_csv(o, records); });
      }
    } catch (const IoError& ex) {
      err << "I/O error: " << ex.what() << '\n';
      return kIoError;
    }
  }

  // a portion with nobody observed is reported as missing; any other failed fit is an error
  const bool fail1 = e.fit1_status != lts::FitStatus::Ok;
  const bool fail2 = e.fit2_status != lts::FitStatus::Ok && sample.r2() > 0;
  if (fail1 || fail2) {
    if (fail1) {
      err << "fit failed for portion 1: " << status_line(e.fit1_status, e.fit1_error) << '\n';
    }
    if (fail2) {
      err << "fit failed for portion 2: " << status_line(e.fit2_status, e.fit2_error) << '\n';
    }
    return kEstimationError;
  }
  return kOk;
}

int run_validate(const ValidateOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const lts::McConfig config = load_config(opts.config_path, opts.overrides);
    out << config_to_json(config).dump(2) << '\n';
    out << "config hash fnv1a64:" << fnv1a_hex(canonical_config(config)) << '\n';
    return kOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kInputError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  }
}

}  // namespace ltscli
