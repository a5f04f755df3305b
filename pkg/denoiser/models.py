from django.core.validators import MinValueValidator
from django.db import models
from django.db.models import Avg, Count

from .choices import NoisePattern, RunStatus, Variant


class BaseModel(models.Model):
    id = models.AutoField(primary_key=True)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        abstract = True


class SynthesisRun(BaseModel):
    pattern = models.CharField(max_length=32, choices=NoisePattern.choices)
    seed = models.BigIntegerField(validators=[MinValueValidator(0)])
    clean_path = models.CharField(max_length=500)
    noisy_path = models.CharField(max_length=500)
    manifest_path = models.CharField(max_length=500)
    noisy_sha256 = models.CharField(max_length=64)

    def __str__(self):
        return f"Synthesis {self.id} ({self.get_pattern_display()}, seed {self.seed})"

    class Meta:
        verbose_name = "Synthesis run"
        verbose_name_plural = "Synthesis runs"


class TrainingRunManager(models.Manager):
    def latest_completed(self):
        return self.filter(status=RunStatus.COMPLETED).order_by('-created_at', '-id').first()


class TrainingRun(BaseModel):
    status = models.CharField(max_length=20, choices=RunStatus.choices, default=RunStatus.RUNNING)
    variant = models.CharField(max_length=20, choices=Variant.choices, default=Variant.HDST)
    seed = models.BigIntegerField(validators=[MinValueValidator(0)])
    config = models.JSONField(default=dict)
    checkpoint_path = models.CharField(max_length=500)
    initial_loss = models.FloatField(null=True, blank=True)
    final_loss = models.FloatField(null=True, blank=True)
    steps = models.PositiveIntegerField(default=0)
    epochs_completed = models.PositiveIntegerField(default=0)
    abort_reason = models.TextField(blank=True)

    objects = TrainingRunManager()

    def __str__(self):
        return f"Training {self.id} ({self.get_status_display()})"

    @property
    def loss_ratio(self):
        if not self.initial_loss or self.final_loss is None:
            return None
        return self.final_loss / self.initial_loss

    class Meta:
        verbose_name = "Training run"
        verbose_name_plural = "Training runs"


class EpochLoss(BaseModel):
    run = models.ForeignKey(TrainingRun, on_delete=models.CASCADE, related_name='epoch_losses')
    epoch = models.PositiveIntegerField()
    lr = models.FloatField(validators=[MinValueValidator(0)])
    loss = models.FloatField()

    def __str__(self):
        return f"Epoch {self.epoch} of run {self.run_id}: {self.loss:.6g}"

    class Meta:
        verbose_name = "Epoch loss"
        verbose_name_plural = "Epoch losses"
        ordering = ['epoch']
        constraints = [
            models.UniqueConstraint(fields=['run', 'epoch'], name='unique_epoch_per_run'),
        ]


class EvaluationRecordManager(models.Manager):
    def aggregate_means(self, label=None):
        records = self.filter(label=label) if label else self.all()
        return records.aggregate(
            pairs=Count('id'),
            mean_psnr=Avg('mean_psnr'),
            mean_ssim=Avg('mean_ssim'),
            mean_sam=Avg('mean_sam'),
        )


class EvaluationRecord(BaseModel):
    label = models.CharField(max_length=200)
    denoised_path = models.CharField(max_length=500)
    reference_path = models.CharField(max_length=500)
    mean_psnr = models.FloatField()
    mean_ssim = models.FloatField()
    mean_sam = models.FloatField()
    data_peak = models.FloatField()

    objects = EvaluationRecordManager()

    def __str__(self):
        return f"{self.label}: {self.mean_psnr:.2f} dB / {self.mean_ssim:.4f} / {self.mean_sam:.3f} deg"

    class Meta:
        verbose_name = "Evaluation record"
        verbose_name_plural = "Evaluation records"
