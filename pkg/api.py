from fastapi import FastAPI, UploadFile, File, Form, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import ValidationError
import uuid
from datetime import datetime
import os
import logging
import shutil
from pathlib import Path
from typing import Dict, Any, List

import settings
from dataset_io import archive_report, read_labeled_csv
from errors import DataError, NumericalError, ShiftCorrectionError
from experiments import run_adaptation, run_simulated_experiment

app = FastAPI(title="Shift correction service")


app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


TEMP_DIR = settings.BASE_DIR / "temp_files"
OUTPUTS_DIR = settings.OUTPUTS_DIR
ARCHIVE_ROOT = settings.ARCHIVE_ROOT

logging.basicConfig(
    level=settings.LOG_LEVEL,
    format=settings.LOG_FORMAT,
    datefmt=settings.LOG_DATEFMT,
)
logger = logging.getLogger(__name__)


def build_response(
    status: str,
    data: Dict[str, Any],
    file_info: Dict[str, Any]
) -> Dict[str, Any]:
    """Build a standardized API response."""
    return {
        "status": status,
        "data": data,
        "file_info": file_info
    }


def _save_upload(upload: UploadFile, file_id: str, role: str) -> Path:
    TEMP_DIR.mkdir(parents=True, exist_ok=True)
    path = TEMP_DIR / f"{role}_{file_id}.csv"
    with open(path, "wb") as buffer:
        shutil.copyfileobj(upload.file, buffer)
    return path


def _raise_http(exc: Exception) -> None:
    """DataError and invalid parameters map to 422, numerical failures to 500."""
    if isinstance(exc, (DataError, ValidationError)):
        raise HTTPException(status_code=422, detail=str(exc))
    if isinstance(exc, NumericalError):
        logger.error(f"Numerical failure: {exc}", exc_info=True)
        raise HTTPException(status_code=500, detail=str(exc))


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/adapt")
def adapt(
    source: UploadFile = File(...),
    target: UploadFile = File(...),
    p: str = Form(str(settings.LATENT_DIM)),
    sigma_sq: float = Form(settings.SIGMA_SQ),
    tau: float = Form(settings.TAU),
    max_iters: int = Form(settings.MAX_ITERS),
    restarts: int = Form(settings.N_RESTARTS, ge=1),
    labeled_fraction: float = Form(settings.LABELED_FRACTION, ge=0, le=1),
    seed: int = Form(0),
):
    """Align an uploaded target CSV onto an uploaded source CSV. `p` may be an integer or "full"."""
    try:
        latent_dim = settings.parse_latent_dim(p)
    except ValueError:
        raise HTTPException(status_code=422, detail=f"p must be an integer >= 1 or 'full', got {p!r}")

    temp_files: List[Path] = []
    file_id = str(uuid.uuid4())
    current_date = datetime.now().strftime("%Y-%m-%d")

    try:
        source_path = _save_upload(source, file_id, "source")
        temp_files.append(source_path)
        target_path = _save_upload(target, file_id, "target")
        temp_files.append(target_path)

        out_dir = OUTPUTS_DIR / current_date / file_id
        report, result = run_adaptation(
            read_labeled_csv(source_path),
            read_labeled_csv(target_path),
            p=latent_dim,
            kcfg=settings.default_kernel_config(sigma_sq=sigma_sq),
            ocfg=settings.default_optimizer_config(tau=tau, max_iters=max_iters),
            train_cfg=settings.default_train_config(),
            n_restarts=restarts,
            labeled_fraction=labeled_fraction,
            seed=seed,
            workers=settings.WORKERS,
            out_dir=out_dir,
        )
        archived = archive_report(report, ARCHIVE_ROOT, tag=file_id)
        logger.info(f"Adapted {source.filename} / {target.filename}: MMD^2 {result.mmd_before:.6e} -> {result.mmd_after:.6e}")

        return build_response(
            status="success",
            data=report.model_dump(mode="json", by_alias=True),
            file_info={
                "source_name": source.filename,
                "target_name": target.filename,
                "file_id": file_id,
                "date": current_date,
                "output_dir": str(out_dir),
                "archive": str(archived) if archived else None,
            }
        )

    except (ShiftCorrectionError, ValidationError) as e:
        _raise_http(e)

    finally:
        # Clean up all temporary files
        for temp_file in temp_files:
            if os.path.exists(temp_file):
                os.remove(temp_file)


@app.post("/experiments/simulated")
def simulated_experiment(
    seed: int = Form(42),
    restarts: int = Form(settings.N_RESTARTS, ge=1),
    grid: int = Form(settings.SWEEP_GRID, ge=3),
):
    """Run the simulated-mixture experiment and return its report."""
    current_date = datetime.now().strftime("%Y-%m-%d")
    out_dir = OUTPUTS_DIR / current_date / f"simulated_seed{seed}"
    try:
        report = run_simulated_experiment(
            seed=seed,
            out_dir=out_dir,
            kcfg=settings.default_kernel_config(),
            ocfg=settings.default_optimizer_config(),
            train_cfg=settings.default_train_config(),
            n_restarts=restarts,
            labeled_fraction=settings.LABELED_FRACTION,
            grid_size=grid,
            workers=settings.WORKERS,
        )
    except (ShiftCorrectionError, ValidationError) as e:
        _raise_http(e)

    archived = archive_report(report, ARCHIVE_ROOT)
    return build_response(
        status="success",
        data=report.model_dump(mode="json", by_alias=True),
        file_info={
            "seed": seed,
            "date": current_date,
            "output_dir": str(out_dir),
            "archive": str(archived) if archived else None,
        }
    )


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host=settings.API_HOST, port=settings.API_PORT)
