from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ResultRow',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('env', models.CharField(help_text='Environment name, e.g. grid4', max_length=50)),
                ('mixture', models.CharField(help_text='Dataset mixture label', max_length=20)),
                ('algorithm', models.CharField(choices=[('flex_f_q', 'Flex-f-Q'), ('flex_f_dice', 'Flex-f-DICE')], max_length=20)),
                ('divergence', models.CharField(help_text='Divergence or preset label', max_length=200)),
                ('seed', models.IntegerField()),
                ('final_return', models.FloatField(help_text='Exact p0-averaged return of the final policy')),
                ('final_norm_return', models.FloatField(help_text='Min-max normalized final return')),
                ('steps', models.IntegerField(default=0)),
                ('metrics_path', models.CharField(blank=True, max_length=500)),
                ('checkpoint_path', models.CharField(blank=True, max_length=500)),
                ('created', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['env', 'mixture', 'algorithm', 'divergence', 'seed'],
            },
        ),
        migrations.AddConstraint(
            model_name='resultrow',
            constraint=models.UniqueConstraint(fields=('env', 'mixture', 'algorithm', 'divergence', 'seed'), name='unique_result_per_seed'),
        ),
    ]
