import argparse
import atexit
import json
import logging
import os
import signal
import sys

import numpy as np

from settings.config import RUN_CONFIG, SOLVE_DEFAULTS, SSM_DEFAULTS
from src.core import files
from src.core import reports as reports_logic
from src.core.errors import GsftError, NonConvergence, ParseError, SolverInfeasible
from src.core.harness import METHODS, mean_rmse, run_experiment
from src.core.models import NscProblem
from src.core.ns import assemble_ns, solve_ns
from src.core.nsc import assemble_nsc, solve_nsc
from src.core.shape_model import align_population, build_ssm, save_model
from src.core.silhouette import solve_silhouette_boosted_ns
from src.core.solver_manager import SolverManager
from src.core.synth import ScenarioConfig, generate_scenario
from src.ui import console

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_NON_CONVERGENCE = 4
EXIT_INTERRUPTED = 130

logger = logging.getLogger("gsft")
solver_manager = SolverManager()


def cleanup():
    try:
        if solver_manager:
            solver_manager.close()
    except Exception as e:
        console.show_warning(f"Error al cerrar el solver: {e}")


def signal_handler(signum, frame):
    console.show_warning(f"Señal {signum} recibida. Cerrando...")
    cleanup()
    os._exit(EXIT_INTERRUPTED)


def _resolve(path, default_name):
    if path and os.path.isdir(path):
        return os.path.join(path, default_name)
    return path


def _out_dir(args):
    out = args.out or RUN_CONFIG['out_dir']
    os.makedirs(out, exist_ok=True)
    return out


def _load_config(args, family='ns'):
    if args.config:
        config = files.load_config(args.config)
    else:
        config = ScenarioConfig.from_ladder(getattr(args, 'config_id', None) or 1, family=family)
    overrides = {}
    if args.seed is not None:
        overrides['seed'] = args.seed
    if getattr(args, 'eps_prime', None) is not None:
        overrides['eps_prime'] = args.eps_prime
    if getattr(args, 'min_depth', None) is not None:
        overrides['min_depth'] = args.min_depth
    if getattr(args, 'density', None) is not None:
        overrides['density'] = args.density
    if overrides:
        data = config.to_dict()
        data.update(overrides)
        config = ScenarioConfig.from_dict(data)
    return config


def _maybe_dump(args, program, out):
    if getattr(args, 'dump_problem', None):
        files.dump_conic_problem(program, args.dump_problem)
        console.show_status_message(f"Programa cónico volcado en {args.dump_problem}")


def cmd_synth(args):
    config = _load_config(args, args.family)
    if args.noise is not None:
        config = ScenarioConfig.from_dict({**config.to_dict(), 'noise_sd': args.noise[0]})
    scenario = generate_scenario(config)
    out = _out_dir(args)
    written = files.save_scenario(scenario, out)
    return True, f"Escenario {config.config_id} (semilla {config.seed}) escrito en {out}: {len(written)} archivos"


def cmd_ns(args):
    problem = files.load_problem(_resolve(args.input, 'problem_ns.json'))
    out = _out_dir(args)
    _maybe_dump(args, assemble_ns(problem, eps_prime=args.eps_prime)[0], out)
    solution = solve_ns(problem, solver_manager, eps_prime=args.eps_prime, strict=args.strict)
    path = files.save_solution(os.path.join(out, 'solution_ns.json'), solution)
    if solution.rank.high_rank:
        console.show_warning(f"Solución de rango alto (λ₂/λ₁ = {solution.rank.ratio:.2e})")
    return True, f"NS resuelto ({solution.status}), objetivo {solution.objective:.6g}; solución en {path}"


def cmd_nsc(args):
    problem = files.load_problem(_resolve(args.input, 'problem_nsc.json'))
    if not isinstance(problem, NscProblem):
        raise ParseError("El archivo no contiene un problema NSC", field='kind')
    if args.min_depth is not None:
        problem = NscProblem(problem.model, problem.rays, problem.correspondences,
                             [args.min_depth] * problem.n_views, eps_prime=problem.eps_prime)
    out = _out_dir(args)
    _maybe_dump(args, assemble_nsc(problem, eps_prime=args.eps_prime)[0], out)
    solution = solve_nsc(problem, solver_manager, eps_prime=args.eps_prime, strict=args.strict)
    path = files.save_solution(os.path.join(out, 'solution_nsc.json'), solution)
    return True, f"NSC resuelto ({solution.status}), objetivo {solution.objective:.6g}; solución en {path}"


def cmd_silh_ns(args):
    problem = files.load_problem(_resolve(args.input, 'problem_ns.json'))
    silhouettes = files.load_silhouettes(args.silhouettes or _resolve(args.input, 'silhouettes.json'))
    out = _out_dir(args)
    try:
        solution, trace = solve_silhouette_boosted_ns(
            problem, silhouettes, lam=args.lam, max_iters=args.max_iters,
            backend=solver_manager, eps_prime=args.eps_prime,
        )
    except NonConvergence as exc:
        files.save_solution(os.path.join(out, 'solution_silh_ns.json'), exc.best, exc.trace)
        raise
    path = files.save_solution(os.path.join(out, 'solution_silh_ns.json'), solution, trace)
    return True, f"NS con siluetas: {len(trace) - 1} iteraciones, objetivo {solution.objective:.6g}; solución en {path}"


def cmd_bench(args):
    out = _out_dir(args)
    methods = args.method or ['ns']
    config_ids = args.config_id_list or ([None] if args.config else [1, 2, 3, 4, 5])
    noises = args.noise or [None]
    options = {'eps_prime': args.eps_prime, 'lam': args.lam, 'max_iters': args.max_iters}

    all_reports = []
    for config_id in config_ids:
        for method in methods:
            family = 'nsc' if 'nsc' in method else 'ns'
            args.config_id = config_id
            base = _load_config(args, family)
            for noise in noises:
                config = base if noise is None else ScenarioConfig.from_dict({**base.to_dict(), 'noise_sd': noise})
                console.show_status_message(f"Configuración {config.config_id}, método {method}, ruido {config.noise_sd}")
                batch = run_experiment(config, method, args.repeats, workers=args.workers, **options)
                all_reports.extend(batch)
                logger.info("RMSE medio %s/%s: %.6g", config.config_id, method, mean_rmse(batch))

    csv_path = os.path.join(out, 'bench.csv')
    svg_path = os.path.join(out, 'bench.svg') if not args.no_svg else None
    reports_logic.emit_report(all_reports, csv_path, svg_path, include_timing=args.timing)
    if args.xlsx:
        reports_logic.export_reports_to_excel(all_reports, os.path.join(out, 'bench.xlsx'), include_timing=args.timing)
    console.show_summary(reports_logic.summarize(all_reports))
    return True, f"{len(all_reports)} filas escritas en {csv_path}"


def _read_samples(path):
    with open(path, 'r') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ParseError(f"JSON inválido: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(data, dict) or 'samples' not in data:
        raise ParseError("Falta un campo obligatorio", field='samples')
    try:
        return [np.array(s, dtype=float).T for s in data['samples']]
    except (TypeError, ValueError) as exc:
        raise ParseError(f"Muestras inválidas: {exc}", field='samples') from exc


def cmd_ssm(args):
    samples = _read_samples(args.input)
    out = _out_dir(args)
    if args.action == 'align':
        aligned = align_population(samples)
        path = os.path.join(out, 'aligned_samples.json')
        with open(path, 'w') as f:
            json.dump({'samples': [a.T.tolist() for a in aligned]}, f)
        return True, f"{len(aligned)} muestras alineadas en {path}"
    model = build_ssm(samples, args.variance_fraction)
    path = save_model(model, os.path.join(out, 'model.json'))
    if model.zero_variance:
        console.show_warning("La población no tiene varianza (ZeroVariance).")
    return True, f"Modelo N={model.n}, M={model.m} guardado en {path}"


def _common(parser):
    parser.add_argument('--out', help="Directorio de salida")
    parser.add_argument('--seed', type=int)
    parser.add_argument('--eps-prime', dest='eps_prime', type=float)
    parser.add_argument('--strict', action='store_true', help="Convierte rango alto y ambigüedad de signo en errores")


def build_parser():
    parser = argparse.ArgumentParser(prog='gsft', description="Shape-from-Template con cámaras generalizadas")
    parser.add_argument('--log-level', default=RUN_CONFIG['log_level'])
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', help="Genera un escenario sintético")
    _common(p)
    p.add_argument('--config', help="ScenarioConfig en JSON")
    p.add_argument('--config-id', dest='config_id', type=int)
    p.add_argument('--family', choices=('ns', 'nsc'), default='ns')
    p.add_argument('--min-depth', dest='min_depth', type=float)
    p.add_argument('--density', type=int)
    p.add_argument('--noise', type=float, nargs=1)
    p.set_defaults(handler=cmd_synth)

    for name, handler, default_file in (('ns', cmd_ns, 'problem_ns.json'), ('nsc', cmd_nsc, 'problem_nsc.json')):
        p = sub.add_parser(name, help=f"Resuelve un problema {name.upper()} desde archivo")
        _common(p)
        p.add_argument('--input', required=True, help=f"Archivo de problema o directorio con {default_file}")
        p.add_argument('--dump-problem', dest='dump_problem', help="Escribe el programa cónico en JSON")
        p.add_argument('--min-depth', dest='min_depth', type=float)
        p.set_defaults(handler=handler)

    p = sub.add_parser('silh-ns', help="NS reforzado con siluetas")
    _common(p)
    p.add_argument('--input', required=True)
    p.add_argument('--silhouettes')
    p.add_argument('--lambda', dest='lam', type=float, default=SOLVE_DEFAULTS['lambda'])
    p.add_argument('--max-iters', dest='max_iters', type=int, default=SOLVE_DEFAULTS['max_iters'])
    p.set_defaults(handler=cmd_silh_ns)

    p = sub.add_parser('bench', help="Ejecuta la escalera de configuraciones")
    _common(p)
    p.add_argument('--config', help="ScenarioConfig en JSON (en lugar de la escalera)")
    p.add_argument('--config-id', dest='config_id_list', type=int, action='append')
    p.add_argument('--method', action='append', choices=METHODS)
    p.add_argument('--repeats', type=int, default=1)
    p.add_argument('--workers', type=int, default=RUN_CONFIG['workers'])
    p.add_argument('--noise', type=float, action='append')
    p.add_argument('--min-depth', dest='min_depth', type=float)
    p.add_argument('--density', type=int)
    p.add_argument('--lambda', dest='lam', type=float, default=SOLVE_DEFAULTS['lambda'])
    p.add_argument('--max-iters', dest='max_iters', type=int, default=SOLVE_DEFAULTS['max_iters'])
    p.add_argument('--timing', action='store_true', help="Incluye wall_ms en el CSV")
    p.add_argument('--xlsx', action='store_true')
    p.add_argument('--no-svg', dest='no_svg', action='store_true')
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser('ssm', help="Construye o alinea una población de formas")
    p.add_argument('action', choices=('build', 'align'))
    p.add_argument('--input', required=True, help='JSON {"samples": [[[x, y, z] × N] ...]}')
    p.add_argument('--out')
    p.add_argument('--variance-fraction', dest='variance_fraction', type=float,
                   default=SSM_DEFAULTS['variance_fraction'])
    p.set_defaults(handler=cmd_ssm)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    console.show_banner()
    try:
        success, message = args.handler(args)
    except ParseError as e:
        console.show_error(f"Error de lectura: {e}")
        return EXIT_PARSE
    except SolverInfeasible as e:
        console.show_error(f"Problema infactible: {e}")
        return EXIT_INFEASIBLE
    except NonConvergence as e:
        console.show_error(f"Sin convergencia: {e}")
        return EXIT_NON_CONVERGENCE
    except GsftError as e:
        console.show_error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR
    except (OSError, ValueError) as e:
        console.show_error(f"Error: {e}")
        return EXIT_ERROR
    if not success:
        console.show_error(message)
        return EXIT_ERROR
    console.show_success(message)
    return EXIT_OK


if __name__ == '__main__':
    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)
    atexit.register(cleanup)
    sys.exit(main())
