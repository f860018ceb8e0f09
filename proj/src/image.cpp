#include "fusionnet/image.hpp"

namespace fusionnet {

template <typename T>
Tensor<T> stack_images(const std::vector<const Image*>& images) {
  if (images.empty()) throw std::invalid_argument("stack_images: no images");
  const Image& first = *images.front();
  Tensor<T> out({static_cast<std::int64_t>(images.size()), 1, first.height, first.width});
  std::size_t offset = 0;
  for (const Image* img : images) {
    require_same_size(first, *img, "stack_images");
    for (float v : img->values) out[offset++] = static_cast<T>(v);
  }
  return out;
}

template <typename T>
Image to_image(const Tensor<T>& tensor, std::int64_t n, std::int64_t c) {
  const Shape& s = tensor.shape();
  if (n < 0 || n >= s.n || c < 0 || c >= s.c) {
    throw std::out_of_range("to_image: item (" + std::to_string(n) + ", " + std::to_string(c) + ") outside " +
                            s.to_string());
  }
  Image out(static_cast<int>(s.h), static_cast<int>(s.w));
  const std::size_t base = tensor.index(n, c, 0, 0);
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = static_cast<float>(tensor[base + i]);
  return out;
}

template Tensor<float> stack_images(const std::vector<const Image*>&);
template Tensor<double> stack_images(const std::vector<const Image*>&);
template Image to_image(const Tensor<float>&, std::int64_t, std::int64_t);
template Image to_image(const Tensor<double>&, std::int64_t, std::int64_t);

}  // namespace fusionnet
