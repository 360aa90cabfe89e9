#pragma once

#include <limits>

#include "gas/image.hpp"
#include "gas/serio.hpp"

namespace gas {

inline double mse_of(const Image& a, const Image& b) {
    require(a.h == b.h && a.w == b.w && a.c == b.c,
            detail::str("metrics: shape mismatch ", a.h, "x", a.w, "x", a.c, " vs ", b.h, "x", b.w, "x", b.c));
    double acc = 0;
    for (size_t i = 0; i < a.px.size(); ++i) {
        const double d = (double)a.px[i] - b.px[i];
        acc += d * d;
    }
    return acc / (double)a.px.size();
}

// 10*log10(peak^2 / MSE); identical images give +inf (reported as "inf").
inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
    const double m = mse_of(a, b);
    if (m == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

inline Image apply_mask(const Image& im, const Image& mask) {
    require(mask.h == im.h && mask.w == im.w && mask.c == 1, "apply_mask: mask must be [h,w,1]");
    Image out = im;
    for (int y = 0; y < im.h; ++y)
        for (int x = 0; x < im.w; ++x)
            for (int ch = 0; ch < im.c; ++ch) out.at(y, x, ch) *= mask.at(y, x, 0) > 0.5f ? 1.f : 0.f;
    return out;
}

// masked metric = metric on mask-multiplied images (backgrounds removed)
inline double masked_psnr(const Image& a, const Image& b, const Image& mask, double peak = 1.0) {
    return psnr(apply_mask(a, mask), apply_mask(b, mask), peak);
}

namespace metric_detail {

inline std::vector<double> gaussian_kernel_11() {
    std::vector<double> k(11);
    const double sigma = 1.5;
    double sum = 0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5;
        k[i] = std::exp(-d * d / (2 * sigma * sigma));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// separable valid-mode Gaussian filter of one channel
inline std::vector<double> gauss_valid(const std::vector<double>& img, int h, int w, int& oh, int& ow) {
    static const std::vector<double> k = gaussian_kernel_11();
    const int r = 11;
    oh = h - r + 1;
    ow = w - r + 1;
    std::vector<double> tmp((size_t)h * ow, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0;
            for (int i = 0; i < r; ++i) acc += k[i] * img[(size_t)y * w + x + i];
            tmp[(size_t)y * ow + x] = acc;
        }
    std::vector<double> out((size_t)oh * ow, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0;
            for (int i = 0; i < r; ++i) acc += k[i] * tmp[(size_t)(y + i) * ow + x];
            out[(size_t)y * ow + x] = acc;
        }
    return out;
}

}  // namespace metric_detail

// SSIM (Wang 2004): 11x11 Gaussian window sigma 1.5, C1=(0.01 peak)^2,
// C2=(0.03 peak)^2, mean over valid windows, channel-averaged.
inline double ssim(const Image& a, const Image& b, double peak = 1.0) {
    require(a.h == b.h && a.w == b.w && a.c == b.c,
            detail::str("ssim: shape mismatch ", a.h, "x", a.w, " vs ", b.h, "x", b.w));
    require(a.h >= 11 && a.w >= 11, detail::str("ssim: image ", a.h, "x", a.w, " smaller than the 11x11 window"));
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);

    double total = 0;
    for (int ch = 0; ch < a.c; ++ch) {
        std::vector<double> pa((size_t)a.h * a.w), pb((size_t)a.h * a.w);
        for (int y = 0; y < a.h; ++y)
            for (int x = 0; x < a.w; ++x) {
                pa[(size_t)y * a.w + x] = a.at(y, x, ch);
                pb[(size_t)y * a.w + x] = b.at(y, x, ch);
            }
        std::vector<double> aa(pa.size()), bb(pb.size()), ab(pa.size());
        for (size_t i = 0; i < pa.size(); ++i) {
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        int oh, ow;
        const auto mu_a = metric_detail::gauss_valid(pa, a.h, a.w, oh, ow);
        const auto mu_b = metric_detail::gauss_valid(pb, a.h, a.w, oh, ow);
        const auto m_aa = metric_detail::gauss_valid(aa, a.h, a.w, oh, ow);
        const auto m_bb = metric_detail::gauss_valid(bb, a.h, a.w, oh, ow);
        const auto m_ab = metric_detail::gauss_valid(ab, a.h, a.w, oh, ow);
        double acc = 0;
        for (size_t i = 0; i < mu_a.size(); ++i) {
            const double va = m_aa[i] - mu_a[i] * mu_a[i];
            const double vb = m_bb[i] - mu_b[i] * mu_b[i];
            const double cov = m_ab[i] - mu_a[i] * mu_b[i];
            acc += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
                   ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
        }
        total += acc / (double)mu_a.size();
    }
    return total / a.c;
}

inline double masked_ssim(const Image& a, const Image& b, const Image& mask, double peak = 1.0) {
    return ssim(apply_mask(a, mask), apply_mask(b, mask), peak);
}

// Temporal-consistency proxy: mean per-pixel |frame_{i+1} - frame_i| inside
// the union of the masks, channel-averaged.
inline double flicker(const std::vector<Image>& frames, const std::vector<Image>& masks) {
    require(frames.size() >= 2, "flicker: needs at least 2 frames");
    require(masks.size() == frames.size(), "flicker: one mask per frame");
    const int h = frames[0].h, w = frames[0].w, c = frames[0].c;
    std::vector<char> in_union((size_t)h * w, 0);
    for (auto& m : masks) {
        require(m.h == h && m.w == w, "flicker: mask size mismatch");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (m.at(y, x, 0) > 0.5f) in_union[(size_t)y * w + x] = 1;
    }
    long count = 0;
    for (char v : in_union) count += v;
    if (count == 0) return 0.0;

    double acc = 0;
    for (size_t f = 0; f + 1 < frames.size(); ++f) {
        require(frames[f].h == h && frames[f].w == w && frames[f].c == c, "flicker: frame size mismatch");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (!in_union[(size_t)y * w + x]) continue;
                for (int ch = 0; ch < c; ++ch)
                    acc += std::abs((double)frames[f + 1].at(y, x, ch) - frames[f].at(y, x, ch));
            }
    }
    return acc / ((double)(frames.size() - 1) * count * c);
}

// ---------------------------------------------------------------------------
// evaluation report
// ---------------------------------------------------------------------------

struct FrameScore {
    std::string subject;
    int reference = 0;
    int frame = 0;
    double psnr = 0, ssim = 0;
    double masked_psnr = 0, masked_ssim = 0;
};

struct EvalReport {
    std::string protocol;  // descriptor: protocol name, inputs used, frames evaluated
    std::vector<FrameScore> per_frame;
    double mean_psnr = 0, mean_ssim = 0, mean_masked_psnr = 0, mean_masked_ssim = 0;
    double mean_flicker = 0;
    std::vector<double> per_sequence_flicker;

    void finalize() {
        double sp = 0, ss = 0, smp = 0, sms = 0;
        for (auto& f : per_frame) {
            sp += f.psnr;
            ss += f.ssim;
            smp += f.masked_psnr;
            sms += f.masked_ssim;
        }
        const double n = std::max<size_t>(1, per_frame.size());
        mean_psnr = sp / n;
        mean_ssim = ss / n;
        mean_masked_psnr = smp / n;
        mean_masked_ssim = sms / n;
        double fl = 0;
        for (double v : per_sequence_flicker) fl += v;
        mean_flicker = per_sequence_flicker.empty() ? 0 : fl / per_sequence_flicker.size();
    }

    static Json num(double v) {
        if (std::isinf(v)) return Json("inf");
        return Json(v);
    }

    Json to_json() const {
        Json j;
        j["protocol"] = protocol;
        j["mean"] = {{"psnr", num(mean_psnr)},
                     {"ssim", num(mean_ssim)},
                     {"masked_psnr", num(mean_masked_psnr)},
                     {"masked_ssim", num(mean_masked_ssim)},
                     {"flicker", num(mean_flicker)}};
        Json rows = Json::array();
        for (auto& f : per_frame) {
            rows.push_back({{"subject", f.subject},
                            {"reference", f.reference},
                            {"frame", f.frame},
                            {"psnr", num(f.psnr)},
                            {"ssim", num(f.ssim)},
                            {"masked_psnr", num(f.masked_psnr)},
                            {"masked_ssim", num(f.masked_ssim)}});
        }
        j["per_frame"] = rows;
        j["per_sequence_flicker"] = per_sequence_flicker;
        return j;
    }

    void write_csv(const std::string& path) const {
        namespace fs = std::filesystem;
        fs::path target(path);
        if (target.has_parent_path()) fs::create_directories(target.parent_path());
        std::ofstream os(path);
        require(os.good(), detail::str("cannot write csv: ", path));
        os << "subject,reference,frame,psnr,ssim,masked_psnr,masked_ssim\n";
        for (auto& f : per_frame) {
            os << f.subject << "," << f.reference << "," << f.frame << "," << f.psnr << "," << f.ssim << ","
               << f.masked_psnr << "," << f.masked_ssim << "\n";
        }
    }
};

}  // namespace gas
