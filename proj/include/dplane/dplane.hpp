#pragma once

#include "dplane/beam_hardening.hpp"
#include "dplane/config.hpp"
#include "dplane/errors.hpp"
#include "dplane/grassmannian.hpp"
#include "dplane/io.hpp"
#include "dplane/microlocal.hpp"
#include "dplane/parallel.hpp"
#include "dplane/pipelines.hpp"
#include "dplane/product_check.hpp"
#include "dplane/scene.hpp"
#include "dplane/sinogram.hpp"
#include "dplane/transform.hpp"
#include "dplane/wavefront.hpp"
