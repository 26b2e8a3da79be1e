//! Typed run configuration.
//!
//! Every key has a default except `grid.nx`. [`RunConfig::to_ini`] writes
//! all keys with defaults materialised, which is what the manifests hold.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use wavecip_core::forward::{BcConfig, BoundaryCondition, SourceSpec};
use wavecip_core::optimizer::{AcgaTolerances, CgaOptions, IndicatorMode, StoppingTolerances};
use wavecip_core::{AdmissibleSet, Grid2D, NoiseModel, Side, SideSet};

use crate::ini::{ConfigError, Entry, Ini, Section};

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub origin: (f64, f64),
    pub extent: (f64, f64),
    pub t_final: f64,
    pub cfl_safety: f64,
    /// Smallest permittivity the time step is chosen for.
    pub eps_min: f64,
    /// Width in nodes of the frame pinned to the background.
    pub frame_width: usize,
}

impl GridConfig {
    pub fn build(&self) -> wavecip_core::Result<Grid2D> {
        Grid2D::with_domain(
            self.nx,
            self.ny,
            self.origin,
            self.extent,
            self.t_final,
            self.cfl_safety,
            self.eps_min,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientKind {
    Constant(f64),
    Gaussian {
        base: f64,
        amplitude: f64,
        center: (f64, f64),
        width: f64,
    },
    /// `x,y,value` CSV on the grid's nodes.
    File(PathBuf),
    /// The corresponding true coefficient (initial guesses only).
    Truth,
}

/// A coefficient builder plus an optional `bump·‖v‖∞·x²y²(1−x)²(1−y)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSpec {
    pub kind: CoefficientKind,
    pub bump: f64,
}

impl CoefficientSpec {
    pub fn constant(value: f64) -> Self {
        Self {
            kind: CoefficientKind::Constant(value),
            bump: 0.0,
        }
    }

    pub fn gaussian(base: f64, amplitude: f64) -> Self {
        Self {
            kind: CoefficientKind::Gaussian {
                base,
                amplitude,
                center: (0.5, 0.7),
                width: 0.002,
            },
            bump: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationConfig {
    pub sides: SideSet,
    /// The observations live on `[grid]` refined this many times.
    pub refinement: usize,
    /// Observation file for the inversions; `<out>/obs.csv` if absent.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub model: NoiseModel,
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationConfig {
    pub gamma_eps: f64,
    pub gamma_sigma: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcgaConfig {
    pub tolerances: AcgaTolerances,
    pub beta_eps: f64,
    pub beta_sigma: f64,
    pub mode: IndicatorMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckPoint {
    /// Halfway between the initial guess and the truth.
    Midpoint,
    Initial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    /// Explicit `(i, j)` nodes; random inner nodes if absent.
    pub nodes: Option<Vec<(usize, usize)>>,
    pub count: usize,
    pub seed: u64,
    pub h_fd: f64,
    pub point: CheckPoint,
    pub tolerance: f64,
    /// Nodes with `|g_FD|` below this fraction of the largest are not judged.
    pub threshold: f64,
    /// Test hook: negates the adjoint gradient before comparing.
    pub flip_sign: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputConfig {
    /// Dump `E_<step>.vtk` every this many steps; 0 disables.
    pub snapshot_every: usize,
    pub vtk: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub boundary: BcConfig,
    pub source: SourceSpec,
    pub truth_eps: CoefficientSpec,
    pub truth_sigma: CoefficientSpec,
    pub initial_eps: CoefficientSpec,
    pub initial_sigma: CoefficientSpec,
    pub admissible: AdmissibleSet,
    pub observation: ObservationConfig,
    pub noise: NoiseConfig,
    pub regularization: RegularizationConfig,
    pub cga: CgaOptions,
    pub acga: AcgaConfig,
    pub gradcheck: GradCheckConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// A config with every default and the given grid size.
    pub fn with_cells(nx: usize) -> Self {
        let source = SourceSpec::one_period(20.0);
        Self {
            grid: GridConfig {
                nx,
                ny: nx,
                origin: (0.0, 0.0),
                extent: (1.0, 1.0),
                t_final: 1.2,
                cfl_safety: 0.5,
                eps_min: 1.0,
                frame_width: 2,
            },
            boundary: BcConfig::default(),
            source,
            truth_eps: CoefficientSpec::gaussian(1.0, 3.0),
            truth_sigma: CoefficientSpec::gaussian(1.0, 1.5),
            initial_eps: CoefficientSpec::constant(1.0),
            initial_sigma: CoefficientSpec::constant(1.0),
            admissible: AdmissibleSet::default(),
            observation: ObservationConfig {
                sides: SideSet::ALL,
                refinement: 0,
                file: None,
            },
            noise: NoiseConfig {
                model: NoiseModel::RelativeGaussian,
                level: 0.1,
                seed: 42,
            },
            regularization: RegularizationConfig {
                gamma_eps: 0.01,
                gamma_sigma: 0.01,
                p: 0.5,
            },
            cga: CgaOptions::default(),
            acga: AcgaConfig {
                tolerances: AcgaTolerances::default(),
                beta_eps: 0.8,
                beta_sigma: 0.8,
                mode: IndicatorMode::Deviation,
            },
            gradcheck: GradCheckConfig {
                nodes: None,
                count: 8,
                seed: 7,
                h_fd: 1e-4,
                point: CheckPoint::Midpoint,
                tolerance: 5e-2,
                threshold: 1e-3,
                flip_sign: false,
            },
            output: OutputConfig {
                snapshot_every: 0,
                vtk: true,
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_ini(&Ini::read(path)?)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self, ConfigError> {
        Self::from_ini(&Ini::parse(path, text)?)
    }

    pub fn from_ini(ini: &Ini) -> Result<Self, ConfigError> {
        const KNOWN: [&str; 15] = [
            "grid",
            "boundary",
            "source",
            "truth.eps",
            "truth.sigma",
            "initial.eps",
            "initial.sigma",
            "admissible",
            "observation",
            "noise",
            "regularization",
            "cga",
            "acga",
            "gradcheck",
            "output",
        ];
        for s in &ini.sections {
            if !KNOWN.contains(&s.name.as_str()) {
                return Err(ini.error(Some(s.line), format!("unknown section [{}]", s.name)));
            }
        }
        // relative file paths are resolved against the config's directory and
        // stored absolute, so a manifest elsewhere still finds them
        let parent = ini.path.parent().unwrap_or(Path::new(""));
        let base_dir = if parent.as_os_str().is_empty() {
            std::env::current_dir().unwrap_or_default()
        } else {
            std::path::absolute(parent).unwrap_or_else(|_| parent.to_path_buf())
        };

        let mut r = Reader::new(ini, "grid");
        let nx = r.required("nx", parse_usize)?;
        let mut cfg = Self::with_cells(nx);
        let g = &mut cfg.grid;
        g.ny = r.get("ny", parse_usize)?.unwrap_or(nx);
        r.set(&mut g.origin, "origin", parse_pair)?;
        r.set(&mut g.extent, "extent", parse_pair)?;
        r.set(&mut g.t_final, "t_final", parse_f64)?;
        r.set(&mut g.cfl_safety, "cfl_safety", parse_f64)?;
        r.set(&mut g.eps_min, "eps_min", parse_f64)?;
        r.set(&mut g.frame_width, "frame_width", parse_usize)?;
        r.finish()?;

        let mut r = Reader::new(ini, "boundary");
        for s in Side::ALL {
            if let Some(bc) = r.get(side_key(s), parse_bc)? {
                cfg.boundary.set(s, bc);
            }
        }
        r.finish()?;

        let mut r = Reader::new(ini, "source");
        r.set(&mut cfg.source.omega, "omega", parse_f64)?;
        cfg.source.t_on = 2.0 * std::f64::consts::PI / cfg.source.omega;
        r.set(&mut cfg.source.t_on, "t_on", parse_f64)?;
        r.set(&mut cfg.source.amplitude, "amplitude", parse_f64)?;
        r.finish()?;

        cfg.truth_eps = read_coefficient(ini, "truth.eps", &base_dir, cfg.truth_eps, false)?;
        cfg.truth_sigma = read_coefficient(ini, "truth.sigma", &base_dir, cfg.truth_sigma, false)?;
        cfg.initial_eps = read_coefficient(ini, "initial.eps", &base_dir, cfg.initial_eps, true)?;
        cfg.initial_sigma = read_coefficient(ini, "initial.sigma", &base_dir, cfg.initial_sigma, true)?;

        let mut r = Reader::new(ini, "admissible");
        let a = &mut cfg.admissible;
        r.set(&mut a.eps_min, "eps_min", parse_f64)?;
        r.set(&mut a.eps_max, "eps_max", parse_f64)?;
        r.set(&mut a.eps_background, "eps_background", parse_f64)?;
        r.set(&mut a.sigma_min, "sigma_min", parse_f64)?;
        r.set(&mut a.sigma_max, "sigma_max", parse_f64)?;
        r.set(&mut a.sigma_background, "sigma_background", parse_f64)?;
        r.finish()?;

        let mut r = Reader::new(ini, "observation");
        r.set(&mut cfg.observation.sides, "sides", parse_sides)?;
        r.set(&mut cfg.observation.refinement, "refinement", parse_usize)?;
        cfg.observation.file = r.get("file", parse_string)?.map(|p| base_dir.join(p));
        r.finish()?;

        let mut r = Reader::new(ini, "noise");
        r.set(&mut cfg.noise.model, "model", parse_noise_model)?;
        r.set(&mut cfg.noise.level, "level", parse_f64)?;
        r.set(&mut cfg.noise.seed, "seed", parse_u64)?;
        r.finish()?;

        let mut r = Reader::new(ini, "regularization");
        r.set(&mut cfg.regularization.gamma_eps, "gamma_eps", parse_f64)?;
        r.set(&mut cfg.regularization.gamma_sigma, "gamma_sigma", parse_f64)?;
        r.set(&mut cfg.regularization.p, "p", parse_f64)?;
        r.finish()?;

        let mut r = Reader::new(ini, "cga");
        let t = &mut cfg.cga.tolerances;
        r.set(&mut t.max_iterations, "max_iterations", parse_usize)?;
        r.set(&mut t.eta1_eps, "eta1_eps", parse_f64)?;
        r.set(&mut t.eta1_sigma, "eta1_sigma", parse_f64)?;
        r.set(&mut t.eta2_eps, "eta2_eps", parse_f64)?;
        r.set(&mut t.eta2_sigma, "eta2_sigma", parse_f64)?;
        r.set(&mut cfg.cga.alpha_max, "alpha_max", parse_f64)?;
        r.set(&mut cfg.cga.beta_max, "beta_max", parse_f64)?;
        r.set(&mut cfg.cga.max_backtracks, "max_backtracks", parse_usize)?;
        r.finish()?;

        let mut r = Reader::new(ini, "acga");
        let t = &mut cfg.acga.tolerances;
        r.set(&mut t.max_refinements, "max_refinements", parse_usize)?;
        r.set(&mut t.theta1_eps, "theta1_eps", parse_f64)?;
        r.set(&mut t.theta1_sigma, "theta1_sigma", parse_f64)?;
        r.set(&mut t.theta2_eps, "theta2_eps", parse_f64)?;
        r.set(&mut t.theta2_sigma, "theta2_sigma", parse_f64)?;
        r.set(&mut cfg.acga.beta_eps, "beta_eps", parse_f64)?;
        r.set(&mut cfg.acga.beta_sigma, "beta_sigma", parse_f64)?;
        r.set(&mut cfg.acga.mode, "mode", parse_mode)?;
        r.finish()?;

        let mut r = Reader::new(ini, "gradcheck");
        let gc = &mut cfg.gradcheck;
        gc.nodes = r.get("nodes", parse_nodes)?;
        r.set(&mut gc.count, "count", parse_usize)?;
        r.set(&mut gc.seed, "seed", parse_u64)?;
        r.set(&mut gc.h_fd, "h_fd", parse_f64)?;
        r.set(&mut gc.point, "point", parse_point)?;
        r.set(&mut gc.tolerance, "tolerance", parse_f64)?;
        r.set(&mut gc.threshold, "threshold", parse_f64)?;
        r.set(&mut gc.flip_sign, "flip_sign", parse_bool)?;
        r.finish()?;

        let mut r = Reader::new(ini, "output");
        r.set(&mut cfg.output.snapshot_every, "snapshot_every", parse_usize)?;
        r.set(&mut cfg.output.vtk, "vtk", parse_bool)?;
        r.finish()?;

        cfg.validate().map_err(|m| ini.error(None, m))?;
        Ok(cfg)
    }

    /// Consistency checks that do not depend on a single key.
    pub fn validate(&self) -> Result<(), String> {
        self.grid.build().map_err(|e| e.to_string())?;
        self.boundary.validate().map_err(|e| e.to_string())?;
        self.admissible.validate().map_err(|e| e.to_string())?;
        self.cga.validate().map_err(|e| e.to_string())?;
        if self.observation.sides.is_empty() {
            return Err("observation.sides must name at least one side".into());
        }
        if !(self.noise.level >= 0.0) {
            return Err(format!("noise.level must be non-negative, got {}", self.noise.level));
        }
        for (name, beta) in [("acga.beta_eps", self.acga.beta_eps), ("acga.beta_sigma", self.acga.beta_sigma)] {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(format!("{name} must lie in (0, 1), got {beta}"));
            }
        }
        for (name, spec) in [("truth.eps", &self.truth_eps), ("truth.sigma", &self.truth_sigma)] {
            if spec.kind == CoefficientKind::Truth {
                return Err(format!("[{name}] cannot refer to the truth"));
            }
        }
        if let Some(&(i, j)) = self.gradcheck.nodes.iter().flatten().find(|&&(i, j)| i > self.grid.nx || j > self.grid.ny) {
            return Err(format!(
                "gradcheck node ({i}, {j}) outside the {}x{} grid",
                self.grid.nx, self.grid.ny
            ));
        }
        if !(self.gradcheck.h_fd > 0.0) {
            return Err("gradcheck.h_fd must be positive".into());
        }
        Ok(())
    }

    /// Full config text, every key present.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let g = &self.grid;
        let _ = writeln!(s, "[grid]");
        kv(&mut s, "nx", g.nx);
        kv(&mut s, "ny", g.ny);
        kv(&mut s, "origin", pair(g.origin));
        kv(&mut s, "extent", pair(g.extent));
        kv(&mut s, "t_final", g.t_final);
        kv(&mut s, "cfl_safety", g.cfl_safety);
        kv(&mut s, "eps_min", g.eps_min);
        kv(&mut s, "frame_width", g.frame_width);

        let _ = writeln!(s, "\n[boundary]");
        for side in Side::ALL {
            kv(&mut s, side_key(side), bc_name(self.boundary.get(side)));
        }

        let _ = writeln!(s, "\n[source]");
        kv(&mut s, "omega", self.source.omega);
        kv(&mut s, "t_on", self.source.t_on);
        kv(&mut s, "amplitude", self.source.amplitude);

        for (name, spec) in [
            ("truth.eps", &self.truth_eps),
            ("truth.sigma", &self.truth_sigma),
            ("initial.eps", &self.initial_eps),
            ("initial.sigma", &self.initial_sigma),
        ] {
            let _ = writeln!(s, "\n[{name}]");
            write_coefficient(&mut s, spec);
        }

        let a = &self.admissible;
        let _ = writeln!(s, "\n[admissible]");
        kv(&mut s, "eps_min", a.eps_min);
        kv(&mut s, "eps_max", a.eps_max);
        kv(&mut s, "eps_background", a.eps_background);
        kv(&mut s, "sigma_min", a.sigma_min);
        kv(&mut s, "sigma_max", a.sigma_max);
        kv(&mut s, "sigma_background", a.sigma_background);

        let o = &self.observation;
        let _ = writeln!(s, "\n[observation]");
        let sides: Vec<String> = o.sides.iter().map(|x| x.number().to_string()).collect();
        kv(&mut s, "sides", sides.join(", "));
        kv(&mut s, "refinement", o.refinement);
        if let Some(f) = &o.file {
            kv(&mut s, "file", f.display());
        }

        let _ = writeln!(s, "\n[noise]");
        kv(&mut s, "model", noise_name(self.noise.model));
        kv(&mut s, "level", self.noise.level);
        kv(&mut s, "seed", self.noise.seed);

        let r = &self.regularization;
        let _ = writeln!(s, "\n[regularization]");
        kv(&mut s, "gamma_eps", r.gamma_eps);
        kv(&mut s, "gamma_sigma", r.gamma_sigma);
        kv(&mut s, "p", r.p);

        let c = &self.cga;
        let t: &StoppingTolerances = &c.tolerances;
        let _ = writeln!(s, "\n[cga]");
        kv(&mut s, "max_iterations", t.max_iterations);
        kv(&mut s, "eta1_eps", t.eta1_eps);
        kv(&mut s, "eta1_sigma", t.eta1_sigma);
        kv(&mut s, "eta2_eps", t.eta2_eps);
        kv(&mut s, "eta2_sigma", t.eta2_sigma);
        kv(&mut s, "alpha_max", c.alpha_max);
        kv(&mut s, "beta_max", c.beta_max);
        kv(&mut s, "max_backtracks", c.max_backtracks);

        let ac = &self.acga;
        let _ = writeln!(s, "\n[acga]");
        kv(&mut s, "max_refinements", ac.tolerances.max_refinements);
        kv(&mut s, "theta1_eps", ac.tolerances.theta1_eps);
        kv(&mut s, "theta1_sigma", ac.tolerances.theta1_sigma);
        kv(&mut s, "theta2_eps", ac.tolerances.theta2_eps);
        kv(&mut s, "theta2_sigma", ac.tolerances.theta2_sigma);
        kv(&mut s, "beta_eps", ac.beta_eps);
        kv(&mut s, "beta_sigma", ac.beta_sigma);
        kv(
            &mut s,
            "mode",
            match ac.mode {
                IndicatorMode::Absolute => "absolute",
                IndicatorMode::Deviation => "deviation",
            },
        );

        let gc = &self.gradcheck;
        let _ = writeln!(s, "\n[gradcheck]");
        if let Some(nodes) = &gc.nodes {
            let list: Vec<String> = nodes.iter().map(|(i, j)| format!("{i} {j}")).collect();
            kv(&mut s, "nodes", list.join(", "));
        }
        kv(&mut s, "count", gc.count);
        kv(&mut s, "seed", gc.seed);
        kv(&mut s, "h_fd", gc.h_fd);
        kv(
            &mut s,
            "point",
            match gc.point {
                CheckPoint::Midpoint => "midpoint",
                CheckPoint::Initial => "initial",
            },
        );
        kv(&mut s, "tolerance", gc.tolerance);
        kv(&mut s, "threshold", gc.threshold);
        kv(&mut s, "flip_sign", gc.flip_sign);

        let _ = writeln!(s, "\n[output]");
        kv(&mut s, "snapshot_every", self.output.snapshot_every);
        kv(&mut s, "vtk", self.output.vtk);
        s
    }
}

fn kv(s: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(s, "{key} = {value}");
}

fn pair(p: (f64, f64)) -> String {
    format!("{}, {}", p.0, p.1)
}

fn write_coefficient(s: &mut String, spec: &CoefficientSpec) {
    match &spec.kind {
        CoefficientKind::Constant(v) => {
            kv(s, "kind", "constant");
            kv(s, "value", v);
        }
        CoefficientKind::Gaussian {
            base,
            amplitude,
            center,
            width,
        } => {
            kv(s, "kind", "gaussian");
            kv(s, "base", base);
            kv(s, "amplitude", amplitude);
            kv(s, "center", pair(*center));
            kv(s, "width", width);
        }
        CoefficientKind::File(p) => {
            kv(s, "kind", "file");
            kv(s, "file", p.display());
        }
        CoefficientKind::Truth => kv(s, "kind", "truth"),
    }
    kv(s, "bump", spec.bump);
}

fn read_coefficient(
    ini: &Ini,
    section: &str,
    base_dir: &Path,
    default: CoefficientSpec,
    allow_truth: bool,
) -> Result<CoefficientSpec, ConfigError> {
    let mut r = Reader::new(ini, section);
    let kind_name = r.get("kind", parse_string)?;
    let kind_line = r.line_of("kind");
    let (def_base, def_amp, def_center, def_width, def_value) = match default.kind {
        CoefficientKind::Gaussian {
            base,
            amplitude,
            center,
            width,
        } => (base, amplitude, center, width, base),
        CoefficientKind::Constant(v) => (v, 0.0, (0.5, 0.7), 0.002, v),
        _ => (1.0, 0.0, (0.5, 0.7), 0.002, 1.0),
    };
    // without a `kind` the section adjusts the default builder
    let default_name = match default.kind {
        CoefficientKind::Constant(_) => "constant",
        CoefficientKind::Gaussian { .. } => "gaussian",
        CoefficientKind::File(_) => "file",
        CoefficientKind::Truth => "truth",
    };
    let kind = match kind_name.as_deref().unwrap_or(default_name) {
        "constant" => CoefficientKind::Constant(r.get("value", parse_f64)?.unwrap_or(def_value)),
        "gaussian" => CoefficientKind::Gaussian {
            base: r.get("base", parse_f64)?.unwrap_or(def_base),
            amplitude: r.get("amplitude", parse_f64)?.unwrap_or(def_amp),
            center: r.get("center", parse_pair)?.unwrap_or(def_center),
            width: r.get("width", parse_f64)?.unwrap_or(def_width),
        },
        "file" => CoefficientKind::File(base_dir.join(r.required("file", parse_string)?)),
        "truth" if allow_truth => CoefficientKind::Truth,
        other => {
            return Err(ini.error(
                kind_line,
                format!("unknown coefficient kind `{other}` in [{section}]"),
            ))
        }
    };
    let bump = r.get("bump", parse_f64)?.unwrap_or(default.bump);
    r.finish()?;
    Ok(CoefficientSpec { kind, bump })
}

/// Key lookup within one section; `finish` rejects keys nobody asked for.
struct Reader<'a> {
    ini: &'a Ini,
    name: &'a str,
    section: Option<&'a Section>,
    used: Vec<&'a str>,
}

impl<'a> Reader<'a> {
    fn new(ini: &'a Ini, name: &'a str) -> Self {
        Self {
            ini,
            name,
            section: ini.section(name),
            used: Vec::new(),
        }
    }

    fn entry(&self, key: &str) -> Option<&'a Entry> {
        self.section.and_then(|s| s.entries.iter().find(|e| e.key == key))
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.entry(key).map(|e| e.line)
    }

    fn section_line(&self) -> Option<usize> {
        self.section.map(|s| s.line)
    }

    fn get<T>(&mut self, key: &'a str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        self.used.push(key);
        match self.entry(key) {
            None => Ok(None),
            Some(e) => parse(&e.value).map(Some).map_err(|m| {
                self.ini
                    .error(Some(e.line), format!("bad value for `{}.{key}`: {m}", self.name))
            }),
        }
    }

    fn set<T>(
        &mut self,
        slot: &mut T,
        key: &'a str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<(), ConfigError> {
        if let Some(v) = self.get(key, parse)? {
            *slot = v;
        }
        Ok(())
    }

    fn required<T>(&mut self, key: &'a str, parse: impl Fn(&str) -> Result<T, String>) -> Result<T, ConfigError> {
        let line = self.section_line();
        self.get(key, parse)?
            .ok_or_else(|| self.ini.error(line, format!("missing required key `{}.{key}`", self.name)))
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some(s) = self.section {
            if let Some(e) = s.entries.iter().find(|e| !self.used.contains(&e.key.as_str())) {
                return Err(self
                    .ini
                    .error(Some(e.line), format!("unknown key `{}.{}`", self.name, e.key)));
            }
        }
        Ok(())
    }
}

fn parse_f64(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{v}` is not finite"))
    }
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.parse().map_err(|_| format!("`{v}` is not a non-negative integer"))
}

fn parse_u64(v: &str) -> Result<u64, String> {
    v.parse().map_err(|_| format!("`{v}` is not a non-negative integer"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("`{v}` is not a boolean")),
    }
}

fn parse_string(v: &str) -> Result<String, String> {
    if v.is_empty() {
        Err("empty value".into())
    } else {
        Ok(v.to_string())
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',').map(|p| parse_f64(p.trim())).collect()
}

fn parse_pair(v: &str) -> Result<(f64, f64), String> {
    match parse_list(v)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        other => Err(format!("expected two comma-separated numbers, got {}", other.len())),
    }
}

fn side_key(s: Side) -> &'static str {
    match s {
        Side::Left => "left",
        Side::Bottom => "bottom",
        Side::Right => "right",
        Side::Top => "top",
    }
}

fn parse_sides(v: &str) -> Result<SideSet, String> {
    let mut set = SideSet::empty();
    for part in v.split(',').map(str::trim) {
        let side = match part {
            "1" | "left" => Side::Left,
            "2" | "bottom" => Side::Bottom,
            "3" | "right" => Side::Right,
            "4" | "top" => Side::Top,
            other => return Err(format!("unknown side `{other}` (use 1-4 or left/bottom/right/top)")),
        };
        set.insert(side);
    }
    Ok(set)
}

fn bc_name(bc: BoundaryCondition) -> &'static str {
    match bc {
        BoundaryCondition::SourceThenAbsorbing => "source",
        BoundaryCondition::Absorbing => "absorbing",
        BoundaryCondition::NeumannZero => "neumann",
    }
}

fn parse_bc(v: &str) -> Result<BoundaryCondition, String> {
    match v {
        "source" => Ok(BoundaryCondition::SourceThenAbsorbing),
        "absorbing" => Ok(BoundaryCondition::Absorbing),
        "neumann" => Ok(BoundaryCondition::NeumannZero),
        _ => Err(format!("`{v}` is not one of source, absorbing, neumann")),
    }
}

fn noise_name(m: NoiseModel) -> &'static str {
    match m {
        NoiseModel::AdditiveGaussian => "additive_gaussian",
        NoiseModel::RelativeGaussian => "relative_gaussian",
    }
}

fn parse_noise_model(v: &str) -> Result<NoiseModel, String> {
    match v {
        "additive_gaussian" => Ok(NoiseModel::AdditiveGaussian),
        "relative_gaussian" => Ok(NoiseModel::RelativeGaussian),
        _ => Err(format!("`{v}` is not one of additive_gaussian, relative_gaussian")),
    }
}

fn parse_mode(v: &str) -> Result<IndicatorMode, String> {
    match v {
        "absolute" => Ok(IndicatorMode::Absolute),
        "deviation" => Ok(IndicatorMode::Deviation),
        _ => Err(format!("`{v}` is not one of absolute, deviation")),
    }
}

fn parse_point(v: &str) -> Result<CheckPoint, String> {
    match v {
        "midpoint" => Ok(CheckPoint::Midpoint),
        "initial" => Ok(CheckPoint::Initial),
        _ => Err(format!("`{v}` is not one of midpoint, initial")),
    }
}

/// `i j, i j, …`
fn parse_nodes(v: &str) -> Result<Vec<(usize, usize)>, String> {
    v.split(',')
        .map(|p| {
            let parts: Vec<&str> = p.split_whitespace().collect();
            match parts.as_slice() {
                [i, j] => Ok((parse_usize(i)?, parse_usize(j)?)),
                _ => Err(format!("node `{}` is not `i j`", p.trim())),
            }
        })
        .collect()
}
