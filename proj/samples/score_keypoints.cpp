// Detects keypoints in an image, ranks them by stability score and prints the best few.
// Usage: sample_score_keypoints [image.png|image.pgm] [n]
// Without an image a procedural scene is used.

#include <cstdlib>
#include <iomanip>
#include <iostream>

#include "stabscore/stabscore.hpp"

int main(int argc, char** argv) {
  using namespace stabscore;
  try {
    const ImageGray img = argc > 1 ? load_image(argv[1]) : synthetic_scene(1);
    DetectOptions opt;
    opt.n = argc > 2 ? std::atoi(argv[2]) : 10;

    const DetectResult res = detect(img, opt);
    std::cout << img.width() << "x" << img.height() << " image, " << res.keypoints.size() << " keypoints"
              << (res.shortage ? " (fewer than requested)" : "") << "\n\n";
    std::cout << "       x        y     response   beta-EME    score  failed/m\n" << std::fixed;
    for (const Keypoint& k : res.keypoints) {
      std::cout << std::setprecision(2) << std::setw(8) << k.pos.x() << ' ' << std::setw(8) << k.pos.y() << ' '
                << std::setprecision(6) << std::setw(12) << k.s << ' ' << std::setprecision(4) << std::setw(10)
                << *k.eta << ' ' << std::setw(8) << *k.score << "  " << k.eme->m_failed << '/' << k.eme->m_total
                << '\n';
    }

    // The same keypoints ranked by raw corner response instead.
    const DetectResult baseline = detect_shi_tomasi(img, opt);
    std::size_t shared = 0;
    for (const Keypoint& a : res.keypoints)
      for (const Keypoint& b : baseline.keypoints) shared += (a.pos - b.pos).norm() < 0.5 ? 1 : 0;
    std::cout << '\n' << shared << " of " << res.keypoints.size() << " also among the top " << baseline.keypoints.size()
              << " by Shi-Tomasi response\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
