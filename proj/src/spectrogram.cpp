// Copyright 2026 The MFHCA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mfhca/spectrogram.hpp"

#include <cmath>

#include "mfhca/errors.hpp"

namespace mfhca {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Symmetric Hamming window: 0.54 - 0.46 cos(2 pi n / (N-1)).
std::vector<double> hamming(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (n - 1));
  return w;
}

// HTK mel scale.
double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters over the full one-sided spectrum (dft_len/2 + 1 bins).
std::vector<std::vector<double>> mel_filterbank(int n_mels, int dft_len, int sample_rate) {
  const int n_bins = dft_len / 2 + 1;
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(static_cast<size_t>(n_mels) + 2);
  for (int m = 0; m < n_mels + 2; ++m) {
    const double hz = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (n_mels + 1));
    centers[static_cast<size_t>(m)] = hz * dft_len / sample_rate;
  }
  std::vector<std::vector<double>> fb(static_cast<size_t>(n_mels),
                                      std::vector<double>(static_cast<size_t>(n_bins), 0.0));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = centers[static_cast<size_t>(m)];
    const double mid = centers[static_cast<size_t>(m) + 1];
    const double hi = centers[static_cast<size_t>(m) + 2];
    for (int k = 0; k < n_bins; ++k) {
      double v = 0.0;
      if (k >= lo && k <= mid && mid > lo) v = (k - lo) / (mid - lo);
      else if (k > mid && k <= hi && hi > mid) v = (hi - k) / (hi - mid);
      fb[static_cast<size_t>(m)][static_cast<size_t>(k)] = v;
    }
  }
  return fb;
}

}  // namespace

int frame_count(int64_t num_samples, const FrontendConfig& cfg) {
  const int win = cfg.frame_len();
  if (num_samples < win)
    throw ValidationError("segment of " + std::to_string(num_samples) +
                          " samples is shorter than one " + std::to_string(win) +
                          "-sample analysis window");
  return static_cast<int>((num_samples - win) / cfg.hop_len()) + 1;
}

std::vector<double> dft_magnitude(const std::vector<double>& frame, int dft_len, int bins) {
  std::vector<double> mag(static_cast<size_t>(bins));
  const int n = static_cast<int>(frame.size());
  for (int k = 0; k < bins; ++k) {
    double re = 0.0, im = 0.0;
    for (int t = 0; t < n; ++t) {
      const double ang = -2.0 * kPi * k * t / dft_len;
      re += frame[static_cast<size_t>(t)] * std::cos(ang);
      im += frame[static_cast<size_t>(t)] * std::sin(ang);
    }
    mag[static_cast<size_t>(k)] = std::sqrt(re * re + im * im);
  }
  return mag;
}

Spectrogram log_spectrogram(const AudioSegment& seg, const FrontendConfig& cfg) {
  if (seg.sample_rate != cfg.sample_rate)
    throw ValidationError("log_spectrogram: segment rate " + std::to_string(seg.sample_rate) +
                          " differs from configured " + std::to_string(cfg.sample_rate));
  const int win = cfg.frame_len();
  const int hop = cfg.hop_len();
  const int frames = frame_count(static_cast<int64_t>(seg.samples.size()), cfg);
  const auto window = hamming(win);

  // Twiddle tables; the frame is zero beyond `win`, so sums stop there.
  const int spec_bins = cfg.mel_bins > 0 ? cfg.dft_len / 2 + 1 : cfg.bins;
  std::vector<double> cos_t(static_cast<size_t>(spec_bins) * win);
  std::vector<double> sin_t(static_cast<size_t>(spec_bins) * win);
  for (int k = 0; k < spec_bins; ++k)
    for (int t = 0; t < win; ++t) {
      const double ang = -2.0 * kPi * k * t / cfg.dft_len;
      cos_t[static_cast<size_t>(k) * win + t] = std::cos(ang);
      sin_t[static_cast<size_t>(k) * win + t] = std::sin(ang);
    }

  std::vector<std::vector<double>> fb;
  if (cfg.mel_bins > 0) fb = mel_filterbank(cfg.mel_bins, cfg.dft_len, cfg.sample_rate);

  Spectrogram out;
  out.rows = frames;
  out.cols = cfg.out_bins();
  out.values.resize(static_cast<size_t>(frames) * out.cols);

  std::vector<double> buf(static_cast<size_t>(win));
  std::vector<double> power(static_cast<size_t>(spec_bins));
  for (int f = 0; f < frames; ++f) {
    const float* x = seg.samples.data() + static_cast<size_t>(f) * hop;
    for (int t = 0; t < win; ++t) buf[static_cast<size_t>(t)] = x[t] * window[static_cast<size_t>(t)];
    for (int k = 0; k < spec_bins; ++k) {
      const double* ct = cos_t.data() + static_cast<size_t>(k) * win;
      const double* st = sin_t.data() + static_cast<size_t>(k) * win;
      double re = 0.0, im = 0.0;
      for (int t = 0; t < win; ++t) {
        re += buf[static_cast<size_t>(t)] * ct[t];
        im += buf[static_cast<size_t>(t)] * st[t];
      }
      power[static_cast<size_t>(k)] = re * re + im * im;
    }
    if (cfg.mel_bins > 0) {
      for (int m = 0; m < cfg.mel_bins; ++m) {
        double acc = 0.0;
        for (int k = 0; k < spec_bins; ++k)
          acc += fb[static_cast<size_t>(m)][static_cast<size_t>(k)] * power[static_cast<size_t>(k)];
        out.at(f, m) = static_cast<float>(std::log(acc + cfg.log_floor));
      }
    } else {
      for (int k = 0; k < cfg.bins; ++k)
        out.at(f, k) = static_cast<float>(std::log(power[static_cast<size_t>(k)] + cfg.log_floor));
    }
  }
  return out;
}

SpecNormalizer fit_normalizer(const std::vector<const Spectrogram*>& training_specs) {
  double sum = 0.0, sq = 0.0;
  int64_t count = 0;
  for (const auto* s : training_specs)
    for (float v : s->values) {
      sum += v;
      sq += double(v) * v;
      ++count;
    }
  if (count == 0) throw ValidationError("fit_normalizer: no spectrogram values");
  const double mean = sum / double(count);
  const double var = sq / double(count) - mean * mean;
  const double stddev = std::sqrt(std::max(var, 0.0));
  if (stddev == 0.0)
    throw ValidationError("fit_normalizer: zero variance (constant spectrogram)");
  return {mean, stddev};
}

void normalize_spectrogram(Spectrogram& spec, const SpecNormalizer& n) {
  if (n.stddev <= 0.0)
    throw ValidationError("normalize_spectrogram: non-positive stddev");
  const float mu = static_cast<float>(n.mean);
  const float inv = static_cast<float>(1.0 / n.stddev);
  for (auto& v : spec.values) v = (v - mu) * inv;
}

}  // namespace mfhca
