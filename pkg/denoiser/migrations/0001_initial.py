# Generated by Django 5.2.8 on 2026-10-18 09:12

import django.core.validators
import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='EvaluationRecord',
            fields=[
                ('id', models.AutoField(primary_key=True, serialize=False)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('label', models.CharField(max_length=200)),
                ('denoised_path', models.CharField(max_length=500)),
                ('reference_path', models.CharField(max_length=500)),
                ('mean_psnr', models.FloatField()),
                ('mean_ssim', models.FloatField()),
                ('mean_sam', models.FloatField()),
                ('data_peak', models.FloatField()),
            ],
            options={
                'verbose_name': 'Evaluation record',
                'verbose_name_plural': 'Evaluation records',
            },
        ),
        migrations.CreateModel(
            name='SynthesisRun',
            fields=[
                ('id', models.AutoField(primary_key=True, serialize=False)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('pattern', models.CharField(choices=[('noniid_gaussian', 'Non-i.i.d. Gaussian'), ('gaussian_stripe', 'Gaussian + stripe'), ('gaussian_deadline', 'Gaussian + deadline'), ('gaussian_impulse', 'Gaussian + impulse'), ('mixture', 'Mixture')], max_length=32)),
                ('seed', models.BigIntegerField(validators=[django.core.validators.MinValueValidator(0)])),
                ('clean_path', models.CharField(max_length=500)),
                ('noisy_path', models.CharField(max_length=500)),
                ('manifest_path', models.CharField(max_length=500)),
                ('noisy_sha256', models.CharField(max_length=64)),
            ],
            options={
                'verbose_name': 'Synthesis run',
                'verbose_name_plural': 'Synthesis runs',
            },
        ),
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.AutoField(primary_key=True, serialize=False)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('aborted', 'Aborted')], default='running', max_length=20)),
                ('variant', models.CharField(choices=[('baseline', 'Baseline'), ('net1', 'Net1'), ('net2', 'Net2'), ('net3', 'Net3'), ('net4', 'Net4'), ('hdst', 'HDST')], default='hdst', max_length=20)),
                ('seed', models.BigIntegerField(validators=[django.core.validators.MinValueValidator(0)])),
                ('config', models.JSONField(default=dict)),
                ('checkpoint_path', models.CharField(max_length=500)),
                ('initial_loss', models.FloatField(blank=True, null=True)),
                ('final_loss', models.FloatField(blank=True, null=True)),
                ('steps', models.PositiveIntegerField(default=0)),
                ('epochs_completed', models.PositiveIntegerField(default=0)),
                ('abort_reason', models.TextField(blank=True)),
            ],
            options={
                'verbose_name': 'Training run',
                'verbose_name_plural': 'Training runs',
            },
        ),
        migrations.CreateModel(
            name='EpochLoss',
            fields=[
                ('id', models.AutoField(primary_key=True, serialize=False)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('epoch', models.PositiveIntegerField()),
                ('lr', models.FloatField(validators=[django.core.validators.MinValueValidator(0)])),
                ('loss', models.FloatField()),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='epoch_losses', to='denoiser.trainingrun')),
            ],
            options={
                'verbose_name': 'Epoch loss',
                'verbose_name_plural': 'Epoch losses',
                'ordering': ['epoch'],
                'constraints': [models.UniqueConstraint(fields=('run', 'epoch'), name='unique_epoch_per_run')],
            },
        ),
    ]
