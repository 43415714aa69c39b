#pragma once

#include "aoii/applications.hpp"
#include "aoii/closed_form.hpp"
#include "aoii/errors.hpp"
#include "aoii/model.hpp"
#include "aoii/optimizer.hpp"
#include "aoii/rvia.hpp"
#include "aoii/simulator.hpp"
