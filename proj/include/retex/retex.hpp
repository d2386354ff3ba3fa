// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include "retex/config.hpp"
#include "retex/diffusion.hpp"
#include "retex/error.hpp"
#include "retex/fixtures.hpp"
#include "retex/gbuffer.hpp"
#include "retex/geometry.hpp"
#include "retex/io_assets.hpp"
#include "retex/io_image.hpp"
#include "retex/io_run.hpp"
#include "retex/mesh.hpp"
#include "retex/metrics.hpp"
#include "retex/parallel.hpp"
#include "retex/pipeline.hpp"
#include "retex/raster.hpp"
#include "retex/rng.hpp"
#include "retex/schedule.hpp"
#include "retex/splat.hpp"
#include "retex/texture_opt.hpp"
#include "retex/toy_denoiser.hpp"
#include "retex/visibility.hpp"
