#include "fidesign/study.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "fidesign/error.hpp"

namespace fidesign {

const VariantSummary& StudyResult::variant(const std::string& name) const {
  for (const auto& v : variants)
    if (v.name == name) return v;
  throw index_error("study: no variant named '" + name + "'");
}

double compensated_sum(const std::vector<double>& xs) {
  double sum = 0.0;
  double comp = 0.0;
  for (double x : xs) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  return sum + comp;
}

VariantSummary summarize(std::string name, std::vector<double> estimates, double true_theta) {
  VariantSummary s;
  s.name = std::move(name);
  s.n = static_cast<int>(estimates.size());
  if (s.n == 0) throw schema_error("study: no replications to summarize");
  s.mean = compensated_sum(estimates) / s.n;
  s.bias = s.mean - true_theta;
  std::vector<double> dev2;
  std::vector<double> err2;
  for (double e : estimates) {
    dev2.push_back((e - s.mean) * (e - s.mean));
    err2.push_back((e - true_theta) * (e - true_theta));
  }
  s.sd = s.n > 1 ? std::sqrt(compensated_sum(dev2) / (s.n - 1)) : 0.0;
  s.mse = compensated_sum(err2) / s.n;
  s.estimates = std::move(estimates);
  return s;
}

Estimator::Estimator(const ModelFamily& family, const EstimatorSpec& spec) : family_(&family), spec_(spec) {
  if (spec_.kind == EstimatorKind::MleGrid) {
    grid_ = spec_.grid.empty() ? theta_grid(family.domain(), spec_.grid_step) : spec_.grid;
    if (grid_.empty()) throw schema_error("study: empty estimation grid");
    models_.reserve(grid_.size());
    for (double th : grid_) models_.push_back(family.eval(th));
  }
}

double Estimator::operator()(const Trajectory& tr) const {
  if (spec_.kind == EstimatorKind::MleGrid) return mle_grid(models_, grid_, tr.y, tr.u_exec).theta;
  const ThetaDomain& d = family_->domain();
  const double start = std::isnan(spec_.em_start) ? 0.5 * (d.lo + d.hi) : spec_.em_start;
  return em_estimate(*family_, start, tr.y, tr.u_exec, spec_.em).theta;
}

StudyResult run_study(const StudyConfig& cfg) {
  if (cfg.reps < 1) throw schema_error("study: reps must be at least 1");
  if (cfg.T < 1) throw schema_error("study: horizon must be at least 1");
  if (cfg.variants.empty()) throw schema_error("study: no policy variants");
  if (!cfg.family.domain().contains(cfg.true_theta)) throw schema_error("study: true theta outside the domain");
  const Estimator estimate(cfg.family, cfg.estimator);
  const PomdpModel truth = cfg.family.eval(cfg.true_theta);
  const std::size_t nv = cfg.variants.size();
  const std::size_t jobs = nv * static_cast<std::size_t>(cfg.reps);
  std::vector<double> theta_hat(jobs);
  std::vector<std::uint64_t> seeds(cfg.reps);
  for (int r = 0; r < cfg.reps; ++r) seeds[r] = replication_seed(cfg.base_seed, static_cast<std::uint64_t>(r));

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::size_t first_error_job = jobs;
  auto worker = [&] {
    for (;;) {
      const std::size_t job = next.fetch_add(1);
      if (job >= jobs) return;
      const std::size_t v = job / cfg.reps;
      const int r = static_cast<int>(job % cfg.reps);
      try {
        const std::unique_ptr<Controller> c = cfg.variants[v].make();
        const Trajectory tr = simulate(truth, *c, cfg.T, seeds[r]);
        theta_hat[job] = estimate(tr);
      } catch (const Error& e) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (job < first_error_job) {
          first_error_job = job;
          first_error = std::make_exception_ptr(Error(
              e.kind(), "replication " + std::to_string(r) + " (" + cfg.variants[v].name + "): " + e.what()));
        }
      }
    }
  };
  const int threads = std::max(1, cfg.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  StudyResult res;
  res.config_hash = cfg.config_hash;
  for (std::size_t v = 0; v < nv; ++v) {
    std::vector<double> est(theta_hat.begin() + v * cfg.reps, theta_hat.begin() + (v + 1) * cfg.reps);
    VariantSummary s = summarize(cfg.variants[v].name, std::move(est), cfg.true_theta);
    s.seeds = seeds;
    res.variants.push_back(std::move(s));
  }
  return res;
}

std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

void write_study_csv(std::ostream& os, const StudyResult& r) {
  os << "variant,n,bias,sd,mse\n";
  for (const auto& v : r.variants)
    os << v.name << ',' << v.n << ',' << format_number(v.bias) << ',' << format_number(v.sd) << ','
       << format_number(v.mse) << '\n';
}

void write_detail_csv(std::ostream& os, const StudyResult& r) {
  os << "variant,rep,seed,theta_hat\n";
  for (const auto& v : r.variants)
    for (int i = 0; i < v.n; ++i)
      os << v.name << ',' << i << ',' << v.seeds[i] << ',' << format_number(v.estimates[i]) << '\n';
}

}  // namespace fidesign
