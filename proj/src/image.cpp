#include "aliaug/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aliaug {

int MaskBuf::count_nonzero() const {
    int n = 0;
    for (uint8_t p : px) n += p != 0;
    return n;
}

ImageBuf load_image_png(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw std::runtime_error("cannot read image: " + path);
    ImageBuf img(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            const auto& bgr = m.at<cv::Vec3b>(y, x);
            img.at(y, x, 0) = bgr[2] / real(255);
            img.at(y, x, 1) = bgr[1] / real(255);
            img.at(y, x, 2) = bgr[0] / real(255);
        }
    return img;
}

MaskBuf load_mask_png(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw std::runtime_error("cannot read mask: " + path);
    MaskBuf mask(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) mask.at(y, x) = m.at<uint8_t>(y, x) >= 128 ? 1 : 0;
    return mask;
}

void save_image_png(const std::string& path, const ImageBuf& img) {
    cv::Mat m(img.h, img.w, CV_8UC3);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            auto q = [&](int c) {
                const real v = std::clamp(img.at(y, x, c), real(0), real(1));
                return static_cast<uint8_t>(std::lround(v * 255));
            };
            m.at<cv::Vec3b>(y, x) = cv::Vec3b(q(2), q(1), q(0));
        }
    if (!cv::imwrite(path, m)) throw std::runtime_error("cannot write image: " + path);
}

void save_mask_png(const std::string& path, const MaskBuf& mask) {
    cv::Mat m(mask.h, mask.w, CV_8UC1);
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x) m.at<uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
    if (!cv::imwrite(path, m)) throw std::runtime_error("cannot write mask: " + path);
}

std::optional<std::string> check_image(const ImageBuf& img) {
    if (img.h <= 0 || img.w <= 0) return "image has empty dimensions";
    if (img.h % 8 != 0 || img.w % 8 != 0) return "image dimensions must be multiples of 8";
    for (real v : img.px) {
        if (!std::isfinite(v)) return "image contains non-finite values";
        if (v < real(0) || v > real(1)) return "image values outside [0,1]";
    }
    return std::nullopt;
}

std::optional<std::string> check_mask(const MaskBuf& mask, bool allow_empty) {
    if (mask.h <= 0 || mask.w <= 0) return "mask has empty dimensions";
    for (uint8_t p : mask.px)
        if (p > 1) return "mask must be binary";
    if (!allow_empty && mask.count_nonzero() == 0) return "mask is empty";
    return std::nullopt;
}

TensorPtr image_to_tensor(const ImageBuf& img) {
    auto t = make_tensor({3, img.h, img.w});
    const int hw = img.h * img.w;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c)
                t->v[c * hw + y * img.w + x] = real(2) * img.at(y, x, c) - real(1);
    return t;
}

ImageBuf tensor_to_image(const Tensor& t) {
    assert(t.shape.size() == 3 && t.dim(0) == 3);
    ImageBuf img(t.dim(1), t.dim(2));
    const int hw = img.h * img.w;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                const real v = (t.v[c * hw + y * img.w + x] + real(1)) / real(2);
                img.at(y, x, c) = std::clamp(v, real(0), real(1));
            }
    return img;
}

TensorPtr mask_to_tensor(const MaskBuf& mask) {
    auto t = make_tensor({3, mask.h, mask.w});
    const int hw = mask.h * mask.w;
    for (int i = 0; i < hw; ++i) {
        const real v = mask.px[i] ? real(1) : real(-1);
        t->v[i] = v;
        t->v[hw + i] = v;
        t->v[2 * hw + i] = v;
    }
    return t;
}

ImageBuf resized_crop(const ImageBuf& img, int size, real crop_y, real crop_x) {
    const int shorter = std::min(img.h, img.w);
    const real s = static_cast<real>(size) / shorter;
    const int rh = std::max(size, static_cast<int>(std::lround(img.h * s)));
    const int rw = std::max(size, static_cast<int>(std::lround(img.w * s)));
    ImageBuf resized(rh, rw);
    for (int y = 0; y < rh; ++y)
        for (int x = 0; x < rw; ++x) {
            const real sy = std::min<real>((y + real(0.5)) / s - real(0.5), img.h - 1);
            const real sx = std::min<real>((x + real(0.5)) / s - real(0.5), img.w - 1);
            const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, img.h - 1);
            const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, img.w - 1);
            const int y1 = std::min(y0 + 1, img.h - 1);
            const int x1 = std::min(x0 + 1, img.w - 1);
            const real fy = std::clamp(sy - y0, real(0), real(1));
            const real fx = std::clamp(sx - x0, real(0), real(1));
            for (int c = 0; c < 3; ++c) {
                const real top = img.at(y0, x0, c) * (1 - fx) + img.at(y0, x1, c) * fx;
                const real bot = img.at(y1, x0, c) * (1 - fx) + img.at(y1, x1, c) * fx;
                resized.at(y, x, c) = top * (1 - fy) + bot * fy;
            }
        }
    const int oy = static_cast<int>(std::lround(crop_y * (rh - size)));
    const int ox = static_cast<int>(std::lround(crop_x * (rw - size)));
    ImageBuf out(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = resized.at(oy + y, ox + x, c);
    return out;
}

}  // namespace aliaug
