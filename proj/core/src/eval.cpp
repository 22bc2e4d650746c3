#include "lomae/eval.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lomae::eval {

double ssim_metric(const Slice& a, const Slice& b, const train::SsimOptions& opt) {
  ag::NoGradGuard no_grad;
  return train::ssim_value(ag::constant(a), ag::constant(b), opt)->value[0];
}

double rmse_metric(const Slice& a, const Slice& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("rmse: shape mismatch");
  double acc = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

namespace {

void mean_std(const std::vector<double>& v, double* mean, double* stddev) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  *mean = m;
  *stddev = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
}

}  // namespace

EvalReport evaluate(const models::Model& model, const std::vector<data::SlicePair>& test_set,
                    const EvalOptions& opt) {
  if (test_set.empty()) throw std::invalid_argument("evaluate: empty test set");
  const double unit = opt.rmse_unit_scale > 0.0 ? opt.rmse_unit_scale : 1.0;

  EvalReport report;
  report.config_fingerprint = model.config().fingerprint();
  report.rmse_units = opt.rmse_unit_scale > 0.0
                          ? "display-window units (normalized x " + std::to_string(unit) + ")"
                          : "normalized units";
  report.seed = opt.seed;

  std::vector<double> ssims, rmses, ssims_noisy, rmses_noisy;
  for (const auto& pair : test_set) {
    const Slice denoised = model.denoise(pair.noisy);
    EvalRow row;
    row.patient_id = pair.patient_id;
    row.slice_index = pair.slice_index;
    row.dose_tag = pair.dose_tag;
    row.ssim = ssim_metric(denoised, pair.clean, opt.ssim);
    row.rmse = rmse_metric(denoised, pair.clean) * unit;
    row.ssim_noisy = ssim_metric(pair.noisy, pair.clean, opt.ssim);
    row.rmse_noisy = rmse_metric(pair.noisy, pair.clean) * unit;
    ssims.push_back(row.ssim);
    rmses.push_back(row.rmse);
    ssims_noisy.push_back(row.ssim_noisy);
    rmses_noisy.push_back(row.rmse_noisy);
    report.rows.push_back(std::move(row));
  }
  mean_std(ssims, &report.ssim_mean, &report.ssim_std);
  mean_std(rmses, &report.rmse_mean, &report.rmse_std);
  double dummy;
  mean_std(ssims_noisy, &report.ssim_noisy_mean, &dummy);
  mean_std(rmses_noisy, &report.rmse_noisy_mean, &dummy);
  report.ssim_improvement = report.ssim_mean - report.ssim_noisy_mean;
  return report;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "patient_id,slice_index,dose,ssim,rmse,ssim_noisy,rmse_noisy\n";
  for (const auto& r : rows)
    os << r.patient_id << "," << r.slice_index << "," << r.dose_tag << "," << r.ssim << ","
       << r.rmse << "," << r.ssim_noisy << "," << r.rmse_noisy << "\n";
  return os.str();
}

std::string EvalReport::summary() const {
  std::ostringstream os;
  os.precision(6);
  os << "slices: " << rows.size() << "\n";
  os << "config: " << config_fingerprint << "\n";
  os << "seed: " << seed << "\n";
  os << "rmse units: " << rmse_units << "\n";
  os << "SSIM:  " << ssim_mean << " +/- " << ssim_std << "  (noisy baseline " << ssim_noisy_mean
     << ", improvement " << ssim_improvement << ")\n";
  os << "RMSE:  " << rmse_mean << " +/- " << rmse_std << "  (noisy baseline " << rmse_noisy_mean
     << ")\n";
  os << "reference results on the clinical benchmark (not comparable at desk scale):\n";
  for (const auto& ref : refvals::table())
    os << "  " << ref.method << ": SSIM " << ref.ssim << " RMSE " << ref.rmse << "\n";
  return os.str();
}

namespace refvals {
const std::vector<MetricRef>& table() {
  static const std::vector<MetricRef> t{kLdct,       kRedcnn, kMapnn,       kSunet,
                                        kSunetLomae, kSwinir, kSwinirLomae};
  return t;
}
}  // namespace refvals

}  // namespace lomae::eval
