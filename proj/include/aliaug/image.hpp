#pragma once

#include "aliaug/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace aliaug {

// RGB image, row-major h*w*3, storage range [0,1]. Model range is [-1,1];
// conversion happens only at the tensor boundary (x -> 2x-1).
struct ImageBuf {
    int h = 0, w = 0;
    std::vector<real> px;

    ImageBuf() = default;
    ImageBuf(int h_, int w_, real fill = real(0)) : h(h_), w(w_), px(static_cast<size_t>(h_) * w_ * 3, fill) {}
    real& at(int y, int x, int c) { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    real at(int y, int x, int c) const { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
};

// Binary mask, values strictly {0,1}.
struct MaskBuf {
    int h = 0, w = 0;
    std::vector<uint8_t> px;

    MaskBuf() = default;
    MaskBuf(int h_, int w_) : h(h_), w(w_), px(static_cast<size_t>(h_) * w_, 0) {}
    uint8_t& at(int y, int x) { return px[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return px[static_cast<size_t>(y) * w + x]; }
    int count_nonzero() const;
};

// PNG I/O. Images are 8-bit RGB, masks single-channel with 0/255 levels.
ImageBuf load_image_png(const std::string& path);
MaskBuf load_mask_png(const std::string& path);
void save_image_png(const std::string& path, const ImageBuf& img);
void save_mask_png(const std::string& path, const MaskBuf& mask);

// Invariant checks; return an error message or nullopt when valid.
std::optional<std::string> check_image(const ImageBuf& img);
std::optional<std::string> check_mask(const MaskBuf& mask, bool allow_empty);

// Boundary conversions between storage images and {3,H,W} model tensors.
TensorPtr image_to_tensor(const ImageBuf& img);
ImageBuf tensor_to_image(const Tensor& t);
// Mask replicated to 3 channels so the shared encoder sees a regular image.
TensorPtr mask_to_tensor(const MaskBuf& mask);

// resized-crop prep: shorter side scaled to `size` (bilinear), then a crop.
// crop_y/crop_x in [0,1] select the window position (0.5 = center).
ImageBuf resized_crop(const ImageBuf& img, int size, real crop_y = real(0.5), real crop_x = real(0.5));

}  // namespace aliaug
