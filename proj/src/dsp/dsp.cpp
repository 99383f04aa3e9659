#include "decaf/dsp/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <complex>
#include <numbers>

namespace decaf::dsp {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

struct Biquad {
  double b0, b1, b2, a1, a2;
};

// Direct form II transposed, in place.
void run_sections(std::vector<double>& x, const std::vector<Biquad>& sos) {
  for (const auto& s : sos) {
    double z1 = 0.0;
    double z2 = 0.0;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

std::vector<Biquad> design_bandpass(double lo_hz, double hi_hz, int order, double fs) {
  const double w1 = 2.0 * fs * std::tan(kPi * lo_hz / fs);
  const double w2 = 2.0 * fs * std::tan(kPi * hi_hz / fs);
  const double w0 = std::sqrt(w1 * w2);
  const double bw = w2 - w1;

  std::vector<Biquad> sos;
  for (int k = 0; k < order; ++k) {
    const cd proto = std::polar(1.0, kPi * (2.0 * k + order + 1) / (2.0 * order));
    const cd pb = proto * bw;
    const cd root = std::sqrt(pb * pb - 4.0 * w0 * w0);
    for (const cd s : {(pb + root) / 2.0, (pb - root) / 2.0}) {
      const cd z = (2.0 * fs + s) / (2.0 * fs - s);
      if (z.imag() <= 0.0) continue;  // keep one pole of each conjugate pair
      sos.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
    }
  }
  // Unit gain at the (prewarped) geometric center frequency.
  const double omega0 = 2.0 * std::atan(w0 / (2.0 * fs));
  const cd zc = std::polar(1.0, -omega0);
  double gain = 1.0;
  for (const auto& s : sos) {
    const cd num = s.b0 + s.b1 * zc + s.b2 * zc * zc;
    const cd den = 1.0 + s.a1 * zc + s.a2 * zc * zc;
    gain *= std::abs(num / den);
  }
  sos.front().b0 /= gain;
  sos.front().b1 /= gain;
  sos.front().b2 /= gain;
  return sos;
}

}  // namespace

VectorXd PsdEstimate::power_db() const {
  return (10.0 * power.array().max(1e-300).log10()).matrix();
}

double PsdEstimate::band_power(double lo_hz, double hi_hz) const {
  double total = 0.0;
  for (Index i = 0; i < freqs_hz.size(); ++i) {
    if (freqs_hz(i) >= lo_hz && freqs_hz(i) < hi_hz) total += power(i);
  }
  return total;
}

PsdEstimate welch_psd(const Eigen::Ref<const VectorXd>& x, double fs, Index nperseg, Index noverlap) {
  if (nperseg < 2 || noverlap < 0 || noverlap >= nperseg) {
    throw ConfigError("welch_psd: need nperseg >= 2 and 0 <= noverlap < nperseg");
  }
  if (x.size() < nperseg) {
    throw ContractError("welch_psd: signal of length " + std::to_string(x.size()) +
                        " is shorter than one segment (" + std::to_string(nperseg) + ")");
  }
  VectorXd window(nperseg);
  for (Index n = 0; n < nperseg; ++n) {
    window(n) = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(n) / static_cast<double>(nperseg));
  }
  const double scale = 1.0 / (fs * window.squaredNorm());
  const Index bins = nperseg / 2 + 1;
  const Index hop = nperseg - noverlap;

  Eigen::FFT<double> fft;
  std::vector<cd> seg(static_cast<std::size_t>(nperseg));
  std::vector<cd> spec;
  VectorXd acc = VectorXd::Zero(bins);
  Index count = 0;
  const double dc_gain = window.sum() * window.sum();
  for (Index start = 0; start + nperseg <= x.size(); start += hop) {
    const double mu = x.segment(start, nperseg).mean();
    for (Index n = 0; n < nperseg; ++n) {
      seg[static_cast<std::size_t>(n)] = (x(start + n) - mu) * window(n);
    }
    fft.fwd(spec, seg);
    for (Index k = 1; k < bins; ++k) acc(k) += std::norm(spec[static_cast<std::size_t>(k)]);
    acc(0) += mu * mu * dc_gain;
    ++count;
  }
  PsdEstimate est;
  est.fs = fs;
  est.nperseg = nperseg;
  est.noverlap = noverlap;
  est.power = acc * (scale / static_cast<double>(count));
  // One-sided: fold negative frequencies into every bin except DC and Nyquist.
  const Index last = nperseg % 2 == 0 ? bins - 1 : bins;
  est.power.segment(1, last - 1) *= 2.0;
  est.freqs_hz = VectorXd::LinSpaced(bins, 0.0, fs / static_cast<double>(nperseg) * static_cast<double>(bins - 1));
  return est;
}

VectorXd butterworth_bandpass(const Eigen::Ref<const VectorXd>& x, double lo_hz, double hi_hz,
                              int order, double fs) {
  if (!(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < fs / 2.0)) {
    throw ConfigError("butterworth_bandpass: need 0 < lo < hi < fs/2, got lo=" +
                      std::to_string(lo_hz) + " hi=" + std::to_string(hi_hz));
  }
  if (order < 1) throw ConfigError("butterworth_bandpass: order must be >= 1");
  const auto sos = design_bandpass(lo_hz, hi_hz, order, fs);
  const Index n = x.size();
  if (n == 0) return x;

  // Odd reflection at both ends to let edge transients settle.
  const Index pad = std::min<Index>(n - 1, std::max<Index>(3 * (2 * order + 1),
                                                           static_cast<Index>(3.0 * fs / lo_hz)));
  std::vector<double> ext;
  ext.reserve(static_cast<std::size_t>(n + 2 * pad));
  for (Index i = pad; i >= 1; --i) ext.push_back(2.0 * x(0) - x(i));
  for (Index i = 0; i < n; ++i) ext.push_back(x(i));
  for (Index i = 1; i <= pad; ++i) ext.push_back(2.0 * x(n - 1) - x(n - 1 - i));

  run_sections(ext, sos);
  std::reverse(ext.begin(), ext.end());
  run_sections(ext, sos);
  std::reverse(ext.begin(), ext.end());
  return Eigen::Map<const VectorXd>(ext.data() + pad, n);
}

Signal add_noise_at_snr(const Eigen::Ref<const Signal>& x, double snr_db, nc::Rng& rng) {
  const double p_signal = x.squaredNorm() / static_cast<double>(x.size());
  if (!(p_signal > 0.0)) throw ContractError("add_noise_at_snr: input has zero power");
  Signal noise(x.rows(), x.cols());
  for (Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
  const double p_noise = noise.squaredNorm() / static_cast<double>(noise.size());
  const double target = p_signal / std::pow(10.0, snr_db / 10.0);
  return x + noise * std::sqrt(target / p_noise);
}

WindowPlan window_slices(Index total_len, Index window_len, Index hop) {
  if (window_len < 1 || hop < 1) throw ContractError("window_slices: window_len and hop must be >= 1");
  WindowPlan plan{window_len, hop, {}};
  for (Index s = 0; s + window_len <= total_len; s += hop) plan.starts.push_back(s);
  return plan;
}

VectorXd pink_noise(Index n, nc::Rng& rng) {
  if (n < 1) throw ContractError("pink_noise: n must be >= 1");
  if (n == 1) return VectorXd::Zero(1);
  std::vector<cd> white(static_cast<std::size_t>(n));
  for (auto& w : white) w = rng.normal();
  Eigen::FFT<double> fft;
  std::vector<cd> spec;
  fft.fwd(spec, white);
  spec[0] = 0.0;
  for (Index k = 1; k < n; ++k) {
    const Index f = std::min(k, n - k);  // symmetric so the inverse stays real
    spec[static_cast<std::size_t>(k)] /= std::sqrt(static_cast<double>(f));
  }
  std::vector<cd> shaped;
  fft.inv(shaped, spec);
  VectorXd out(n);
  for (Index i = 0; i < n; ++i) out(i) = shaped[static_cast<std::size_t>(i)].real();
  out.array() -= out.mean();
  const double sd = std::sqrt(out.squaredNorm() / static_cast<double>(n));
  return out / sd;
}

}  // namespace decaf::dsp
