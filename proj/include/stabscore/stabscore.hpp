#pragma once

#include "stabscore/core.hpp"
#include "stabscore/detector.hpp"
#include "stabscore/evalkit.hpp"
#include "stabscore/geometry.hpp"
#include "stabscore/homography.hpp"
#include "stabscore/image.hpp"
#include "stabscore/image_io.hpp"
#include "stabscore/parallel.hpp"
#include "stabscore/records.hpp"
#include "stabscore/rng.hpp"
#include "stabscore/scene.hpp"
#include "stabscore/shitomasi.hpp"
#include "stabscore/stability.hpp"
#include "stabscore/stats.hpp"
