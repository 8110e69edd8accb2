#include "ropnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "ropnet/image.hpp"
#include "ropnet/kernels.hpp"

namespace fs = std::filesystem;

namespace ropnet {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int64_t kTexSize = 384;
constexpr double kTexRadius = 0.46 * kTexSize;

// camera sector: full weight inside +-80 deg, cosine ramp down to a 0.35
// floor by +-100 deg — features outside the sector lose most contrast
double sector_window(double phi) {
  const double a = std::abs(phi);
  constexpr double kFull = 80.0 * kPi / 180.0;
  constexpr double kEdge = 100.0 * kPi / 180.0;
  if (a <= kFull) return 1.0;
  if (a >= kEdge) return 0.35;
  const double t = (a - kFull) / (kEdge - kFull);
  return 0.35 + 0.65 * (0.5 + 0.5 * std::cos(kPi * t));
}

struct LatentEye {
  Tensor tex;  // [kTexSize, kTexSize, 3] eye-frame scene
  double tint[3] = {0, 0, 0};
  double scale = 1.0;  // eye size jitter
  bool positive = false;
};

// base fundus shading at normalized radius r, before any feature
void fundus_base(const double tint[3], double r, double out[3]) {
  constexpr double kDark = 0.016;
  if (r >= 1.06) {
    out[0] = out[1] = out[2] = kDark;
    return;
  }
  const double shade = 0.95 - 0.38 * r * r;
  double edge = 1.0;
  if (r > 0.97) {
    const double t = std::clamp((r - 0.97) / 0.09, 0.0, 1.0);
    edge = 1.0 - t * t * (3.0 - 2.0 * t);
  }
  for (int c = 0; c < 3; ++c) out[c] = kDark + (tint[c] * shade - kDark) * edge;
}

LatentEye build_latent(uint64_t eye_seed, double positive_rate) {
  Rng rng(eye_seed);
  LatentEye eye;
  eye.positive = rng.bernoulli(positive_rate);
  eye.tint[0] = rng.uniform(0.54, 0.70);
  eye.tint[1] = rng.uniform(0.23, 0.33);
  eye.tint[2] = rng.uniform(0.07, 0.13);
  eye.scale = rng.uniform(0.90, 1.0);

  // optic disc
  const double od_r = rng.uniform(0.26, 0.38);
  const double od_phi = rng.uniform(-0.7, 0.7);
  const double od_sigma = rng.uniform(0.07, 0.10) * kTexRadius;
  const double od_cx = kTexSize / 2.0 + od_r * kTexRadius * std::cos(od_phi);
  const double od_cy = kTexSize / 2.0 + od_r * kTexRadius * std::sin(od_phi);

  // demarcation ridge (positive eyes only): a bright arc separating the
  // vascularized center from an avascular, slightly washed-out periphery
  const bool ridged = eye.positive;
  const double ridge_phi = rng.uniform(-0.96, 0.96);
  const double ridge_r = rng.uniform(0.55, 0.75) * kTexRadius;
  const double ridge_half = rng.uniform(0.52, 0.87);  // angular half-extent
  const double ridge_sigma = rng.uniform(0.035, 0.060) * kTexRadius;
  const double ridge_amp = rng.uniform(0.32, 0.44);

  eye.tex = Tensor({kTexSize, kTexSize, 3});
  for (int64_t i = 0; i < kTexSize; ++i) {
    for (int64_t j = 0; j < kTexSize; ++j) {
      const double dy = i - kTexSize / 2.0, dx = j - kTexSize / 2.0;
      const double rad = std::hypot(dx, dy);
      const double r = rad / kTexRadius;
      double c[3];
      fundus_base(eye.tint, r, c);
      // optic blob
      const double dod = std::hypot(j - od_cx, i - od_cy);
      const double odw = std::exp(-dod * dod / (2.0 * od_sigma * od_sigma));
      c[0] += 0.33 * odw;
      c[1] += 0.30 * odw;
      c[2] += 0.14 * odw;
      if (ridged && r < 1.02) {
        // avascular periphery: everything beyond the ridge fades a little
        const double past = (rad - ridge_r) / (2.0 * ridge_sigma);
        if (past > 0.0) {
          const double t = std::min(past, 1.0);
          const double fade = 1.0 - 0.12 * t * t * (3.0 - 2.0 * t);
          c[0] *= fade;
          c[1] *= fade;
          c[2] *= fade;
        }
        double dphi = std::atan2(dy, dx) - ridge_phi;
        while (dphi > kPi) dphi -= 2.0 * kPi;
        while (dphi < -kPi) dphi += 2.0 * kPi;
        if (std::abs(dphi) < ridge_half) {
          const double ang = std::cos(0.5 * kPi * dphi / ridge_half);
          const double dr = rad - ridge_r;
          const double rw = std::exp(-dr * dr / (2.0 * ridge_sigma * ridge_sigma));
          const double a = ridge_amp * rw * ang * ang;
          c[0] += a;
          c[1] += 0.92 * a;
          c[2] += 0.55 * a;
        }
      }
      float* px = eye.tex.data() + (i * kTexSize + j) * 3;
      for (int k = 0; k < 3; ++k) px[k] = static_cast<float>(std::clamp(c[k], 0.0, 1.0));
    }
  }

  // vessels: random walks out of the optic disc, stamped darkly on top
  const int nv = 4 + static_cast<int>(rng.uniform_int(3));
  for (int v = 0; v < nv; ++v) {
    double x = od_cx, y = od_cy;
    double dir = rng.uniform(0.0, 2.0 * kPi);
    const int steps = 260 + static_cast<int>(rng.uniform_int(120));
    for (int s = 0; s < steps; ++s) {
      dir += rng.normal(0.0, 0.10);
      // vessels never cross into the avascular zone of a positive eye
      const double rad = std::hypot(x - kTexSize / 2.0, y - kTexSize / 2.0);
      if (ridged && rad > ridge_r - 1.5 * ridge_sigma) break;
      // steer back inward when drifting off the fundus
      const double rr = rad / kTexRadius;
      if (rr > 0.93) {
        const double inward = std::atan2(kTexSize / 2.0 - y, kTexSize / 2.0 - x);
        dir = inward + rng.normal(0.0, 0.3);
      }
      x += std::cos(dir);
      y += std::sin(dir);
      const double sigma = 1.45 - 0.7 * (static_cast<double>(s) / steps);
      const int px = static_cast<int>(std::lround(x)), py = static_cast<int>(std::lround(y));
      for (int oy = -2; oy <= 2; ++oy) {
        for (int ox = -2; ox <= 2; ++ox) {
          const int qx = px + ox, qy = py + oy;
          if (qx < 0 || qy < 0 || qx >= kTexSize || qy >= kTexSize) continue;
          const double d2 = (qx - x) * (qx - x) + (qy - y) * (qy - y);
          const float w = static_cast<float>(0.55 * std::exp(-d2 / (2.0 * sigma * sigma)));
          float* q = eye.tex.data() + (qy * kTexSize + qx) * 3;
          q[0] = std::max(0.02f, q[0] - 0.16f * w);
          q[1] = std::max(0.02f, q[1] - 0.20f * w);
          q[2] = std::max(0.02f, q[2] - 0.14f * w);
        }
      }
    }
  }
  return eye;
}

RawImage render_image(const LatentEye& eye, double theta, Quality tier, uint64_t noise_seed) {
  const int64_t h = tier == Quality::High ? kHighQualityH : kLowQualityH;
  const int64_t w = tier == Quality::High ? kHighQualityW : kLowQualityW;
  const double radius = 0.46 * static_cast<double>(std::min(h, w)) * eye.scale;
  const double cx = w / 2.0, cy = h / 2.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);

  Tensor out({h, w, 3});
  kern::parallel_for(h, [&](int64_t row0, int64_t row1) {
    for (int64_t i = row0; i < row1; ++i) {
      Rng noise(Rng::mix(noise_seed, static_cast<uint64_t>(i)));
      for (int64_t j = 0; j < w; ++j) {
        const double dy = (i - cy) / radius, dx = (j - cx) / radius;
        const double r = std::hypot(dx, dy);
        double c[3];
        fundus_base(eye.tint, r, c);
        if (r < 1.5) {
          // rotate into the eye frame and sample the latent scene
          const double ex = dx * cos_t + dy * sin_t;
          const double ey = -dx * sin_t + dy * cos_t;
          const double tx = std::clamp(kTexSize / 2.0 + ex * kTexRadius, 0.0, kTexSize - 1.0);
          const double ty = std::clamp(kTexSize / 2.0 + ey * kTexRadius, 0.0, kTexSize - 1.0);
          const int64_t x0 = static_cast<int64_t>(tx), y0 = static_cast<int64_t>(ty);
          const int64_t x1 = std::min(x0 + 1, kTexSize - 1), y1 = std::min(y0 + 1, kTexSize - 1);
          const double fx = tx - x0, fy = ty - y0;
          const double win = sector_window(std::atan2(dy, dx));
          for (int k = 0; k < 3; ++k) {
            const double s00 = eye.tex[(y0 * kTexSize + x0) * 3 + k];
            const double s01 = eye.tex[(y0 * kTexSize + x1) * 3 + k];
            const double s10 = eye.tex[(y1 * kTexSize + x0) * 3 + k];
            const double s11 = eye.tex[(y1 * kTexSize + x1) * 3 + k];
            const double s = (s00 * (1 - fx) + s01 * fx) * (1 - fy) +
                             (s10 * (1 - fx) + s11 * fx) * fy;
            // only the features fade at the sector edge, not the disc itself
            c[k] = c[k] + (s - c[k]) * win;
          }
        }
        float* px = out.data() + (i * w + j) * 3;
        for (int k = 0; k < 3; ++k) {
          const double noisy = c[k] + noise.uniform(-4.0 / 255.0, 4.0 / 255.0);
          double v = std::clamp(noisy, 0.0, 1.0);
          if (tier == Quality::Low) v = std::round(v * 7.0) / 7.0;  // 3 bits per channel
          px[k] = static_cast<float>(v);
        }
      }
    }
  });
  return to_raw(out);
}

}  // namespace

Manifest synth_generate(const SynthConfig& cfg, const std::string& out_dir) {
  if (cfg.n_patients < 1 || cfg.images_per_eye < 1) {
    raise(ErrorKind::Parameter, "need at least one patient and one image per eye");
  }
  if (cfg.positive_rate < 0.0 || cfg.positive_rate > 1.0 || cfg.quality_mix < 0.0 ||
      cfg.quality_mix > 1.0) {
    raise(ErrorKind::Parameter, "rates must lie in [0,1]");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) raise(ErrorKind::Io, "cannot create output dir '" + out_dir + "': " + ec.message());

  Manifest m;
  m.dir = out_dir;
  for (int64_t p = 0; p < cfg.n_patients; ++p) {
    for (int e = 0; e < 2; ++e) {
      const uint64_t eye_seed = Rng::mix(cfg.seed, (static_cast<uint64_t>(p) << 1) | unsigned(e));
      const LatentEye eye = build_latent(eye_seed, cfg.positive_rate);
      for (int64_t img = 0; img < cfg.images_per_eye; ++img) {
        Rng irng(Rng::mix(eye_seed, 0x1000 + static_cast<uint64_t>(img)));
        const Quality tier = irng.bernoulli(cfg.quality_mix) ? Quality::Low : Quality::High;
        const double theta = irng.uniform(-25.0 * kPi / 180.0, 25.0 * kPi / 180.0);
        const uint64_t noise_seed = irng.next_u64();
        const RawImage raw = render_image(eye, theta, tier, noise_seed);

        char pid[32];
        std::snprintf(pid, sizeof(pid), "p%04lld", static_cast<long long>(p));
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%s_%lld.ppm", pid, e == 0 ? "L" : "R",
                      static_cast<long long>(img));
        save_ppm(raw, (fs::path(out_dir) / name).string());

        ImageRecord rec;
        rec.path = name;
        rec.patient_id = pid;
        rec.eye = e == 0 ? Eye::L : Eye::R;
        rec.label = eye.positive ? 1 : 0;
        rec.quality = tier;
        rec.split = SplitTag::Unassigned;
        m.records.push_back(std::move(rec));
      }
    }
  }
  save_manifest(m, (fs::path(out_dir) / "manifest.csv").string());
  return m;
}

}  // namespace ropnet
